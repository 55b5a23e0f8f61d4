//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially.
//!
//! `cargo test -p m4d-cli --test acceptance [-- <name filter>...]`. The
//! process fails when any criterion fails, except those listed in
//! `KNOWN_CONFLICTS`, which still print FAIL with their reason.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, ensure, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use m4d_core::blocks::{BlockConfig, BlockStack};
use m4d_core::geometry::{farthest_point_sampling, knn_radius, partition, Labels, Point3, PointCloudVideo};
use m4d_core::model::{Mamba4D, Mamba4DConfig, TaskKind};
use m4d_core::numerics::RowMix;
use m4d_core::ordering::{apply, deserialize, serialize, AxisKey, ScanOrder};
use m4d_core::scaling::{bench_kernel, runtime_slope, BenchKernel, BenchPolicy, BenchRecord, TrackingAllocator};
use m4d_core::ssm::{selective_scan_parallel, selective_scan_sequential, SsmParams};
use m4d_core::training::{
    accuracy, edit_score, generate_synthetic, mean_iou, segmental_f1, train, EpochReport, SyntheticSpec, TrainOptions,
};
use m4d_core::{ParamStore, Tape, Tensor, Var};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator::new();

type Check = fn() -> anyhow::Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> anyhow::Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

/// Criteria whose sub-requirements contradict each other; see the README.
const KNOWN_CONFLICTS: &[(&str, &str)] = &[(
    "serialization-laws",
    "an ascending sequential example cannot coexist with cross == sequential at F=1 (cross scans descending)",
)];

const CHECKS: &[(&str, Check, Option<u64>)] = &[
    ("scan-oracle", scan_oracle, Some(30)),
    ("gradcheck", gradcheck_suite, Some(300)),
    ("geometry-oracles", geometry_oracles, None),
    ("partition-counts", partition_counts, None),
    ("serialization-laws", serialization_laws, None),
    ("identity-at-init", identity_at_init, None),
    ("efficiency-shape", efficiency_shape, Some(600)),
    ("learning-sanity", learning_sanity, Some(1200)),
    ("metric-oracles", metric_oracles, None),
    ("ablation-machinery", ablation_machinery, None),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    let mut ran = 0;
    for &(name, check, budget) in CHECKS {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (mut pass, mut detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if let Some(limit) = budget {
            if took > Duration::from_secs(limit) {
                pass = false;
                detail.push_str(&format!("; over the {limit}s budget"));
            }
        }
        let known = KNOWN_CONFLICTS.iter().find(|(n, _)| *n == name).map(|(_, why)| *why);
        if !pass {
            match known {
                Some(why) => detail.push_str(&format!(" [known conflict: {why}]")),
                None => unexpected += 1,
            }
        }
        println!("{} {name} ({:.1}s): {detail}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    println!("acceptance: {ran} criteria run, {unexpected} unexpected failures");
    if unexpected > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- scan oracle

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Direct recurrence, written independently of the library kernels.
fn naive_scan(p: &SsmParams, x: &Tensor) -> Vec<f64> {
    let (l, d) = (x.shape()[0], x.shape()[1]);
    let n = p.a.shape()[1];
    let mut h = vec![0.0; d * n];
    let mut y = vec![0.0; l * d];
    for t in 0..l {
        let xt = x.row(t);
        let proj = |w: &Tensor, cols: usize, j: usize| (0..d).map(|i| xt[i] * w.data()[i * cols + j]).sum::<f64>();
        let b: Vec<f64> = (0..n).map(|k| proj(&p.w_b, n, k)).collect();
        let c: Vec<f64> = (0..n).map(|k| proj(&p.w_c, n, k)).collect();
        for ch in 0..d {
            let delta = softplus(proj(&p.w_delta, d, ch) + p.delta_bias.data()[ch]);
            let mut acc = 0.0;
            for k in 0..n {
                let s = &mut h[ch * n + k];
                *s = (delta * p.a.data()[ch * n + k]).exp() * *s + delta * b[k] * xt[ch];
                acc += c[k] * *s;
            }
            y[t * d + ch] = acc + p.d_skip.data()[ch] * xt[ch];
        }
    }
    y
}

fn random_params(d: usize, n: usize, rng: &mut ChaCha8Rng) -> anyhow::Result<SsmParams> {
    let s = 1.0 / (d as f64).sqrt();
    let mut p = SsmParams::with_projections(
        Tensor::randn([d, n], s, rng),
        Tensor::randn([d, n], s, rng),
        Tensor::randn([d, d], s, rng),
    )?;
    p.a = Tensor::new([d, n], (0..d * n).map(|_| -rng.random_range(0.05..4.0)).collect())?;
    p.delta_bias = Tensor::new([d], (0..d).map(|_| rng.random_range(-2.0..1.0)).collect())?;
    p.d_skip = Tensor::randn([d], 1.0, rng);
    Ok(p)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn scan_oracle() -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fixed: [usize; 19] = [1, 2, 3, 5, 7, 8, 31, 33, 100, 127, 128, 129, 255, 257, 511, 513, 1000, 1023, 1024];
    let (mut worst_par, mut worst_naive, mut non_pow2) = (0.0f64, 0.0f64, 0);
    for case in 0..200 {
        let l = fixed.get(case).copied().unwrap_or_else(|| rng.random_range(1..=1024));
        non_pow2 += usize::from(!l.is_power_of_two());
        let (d, n) = (rng.random_range(1..=6), rng.random_range(1..=16));
        let p = random_params(d, n, &mut rng)?;
        let x = Tensor::randn([l, d], 1.0, &mut rng);
        let seq = selective_scan_sequential(&p, &x)?;
        let par = selective_scan_parallel(&p, &x)?;
        worst_par = worst_par.max(seq.max_abs_diff(&par));
        worst_naive = worst_naive.max(max_abs(seq.data(), &naive_scan(&p, &x)));
    }
    outcome(
        worst_par <= 1e-8 && worst_naive <= 1e-8,
        format!("200 cases ({non_pow2} non-power-of-two L), max|par-seq| = {worst_par:.2e}, max|seq-naive| = {worst_naive:.2e} (tol 1e-8)"),
    )
}

// ------------------------------------------------------------------ gradcheck

const FD_STEP: f64 = 1e-5;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Worst relative error between the tape gradient and central differences over all inputs.
fn fd_inputs(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> anyhow::Result<Var>) -> anyhow::Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let value = |xs: &[Tensor]| -> anyhow::Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).item())
    };
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..inputs[i].numel() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += FD_STEP;
            let up = value(&xs)?;
            xs[i].data_mut()[j] -= 2.0 * FD_STEP;
            let down = value(&xs)?;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    Ok(worst)
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Reduces `y` to a scalar with fixed random weights so every output element matters.
fn project(tape: &mut Tape, y: Var, seed: u64) -> anyhow::Result<Var> {
    let shape = tape.shape(y).to_vec();
    let w = uniform(&shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(tape.weighted_sum(y, &w)?)
}

type OpCase = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> anyhow::Result<Var>>);

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let mut r = |s: &[usize]| Tensor::randn(s.to_vec(), 1.0, rng);
    let mut cases: Vec<OpCase> = vec![
        ("add", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t, v| { let y = t.add(v[0], v[1])?; project(t, y, 1) })),
        ("sub", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t, v| { let y = t.sub(v[0], v[1])?; project(t, y, 2) })),
        ("mul", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t, v| { let y = t.mul(v[0], v[1])?; project(t, y, 3) })),
        ("add_bias", vec![r(&[2, 3, 4]), r(&[4])], Box::new(|t, v| { let y = t.add_bias(v[0], v[1])?; project(t, y, 4) })),
        ("scale", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.scale(v[0], -1.7); project(t, y, 5) })),
        ("matmul", vec![r(&[2, 3, 4]), r(&[4, 5])], Box::new(|t, v| { let y = t.matmul(v[0], v[1])?; project(t, y, 6) })),
        ("silu", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.silu(v[0]); project(t, y, 7) })),
        ("sigmoid", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.sigmoid(v[0]); project(t, y, 8) })),
        ("softplus", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.softplus(v[0]); project(t, y, 9) })),
        ("exp", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.exp(v[0]); project(t, y, 10) })),
        ("neg", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.neg(v[0]); project(t, y, 11) })),
        ("layer_norm", vec![r(&[3, 5]), r(&[5]), r(&[5])], Box::new(|t, v| { let y = t.layer_norm(v[0], v[1], v[2])?; project(t, y, 12) })),
        ("depthwise_conv1d", vec![r(&[2, 6, 3]), r(&[4, 3])], Box::new(|t, v| { let y = t.depthwise_conv1d(v[0], v[1])?; project(t, y, 13) })),
        ("gather_rows", vec![r(&[5, 3])], Box::new(|t, v| { let y = t.gather_rows(v[0], &[4, 0, 0, 2])?; project(t, y, 14) })),
        ("reshape", vec![r(&[2, 6])], Box::new(|t, v| { let y = t.reshape(v[0], [3, 4])?; project(t, y, 15) })),
        ("sum", vec![r(&[3, 4])], Box::new(|t, v| { let y = t.mul(v[0], v[0])?; Ok(t.sum(y)) })),
        ("weighted_sum", vec![r(&[3, 4])], Box::new(|t, v| project(t, v[0], 16))),
    ];
    for axis in 0..3 {
        cases.push(("max_pool", vec![r(&[2, 3, 4])], Box::new(move |t, v| { let y = t.max_pool(v[0], axis)?; project(t, y, 17) })));
    }
    let mix = Arc::new(RowMix { rows: vec![vec![(0, 0.5), (3, -1.5)], vec![], vec![(2, 2.0), (2, 0.25), (4, 1.0)]] });
    cases.push(("mix_rows", vec![r(&[5, 3])], Box::new(move |t, v| { let y = t.mix_rows(v[0], mix.clone())?; project(t, y, 18) })));
    let targets = vec![2, 0, 1, 2];
    cases.push(("cross_entropy", vec![r(&[4, 3])], Box::new(move |t, v| Ok(t.cross_entropy(v[0], &targets, None)?))));
    cases.push((
        "cross_entropy(weighted)",
        vec![r(&[4, 3])],
        Box::new(|t, v| Ok(t.cross_entropy(v[0], &[1, 1, 0, 2], Some(&[0.5, 2.0, 1.0]))?)),
    ));
    cases
}

fn micro_config(task: TaskKind) -> Mamba4DConfig {
    Mamba4DConfig {
        task,
        classes: 3,
        in_channels: 2,
        temporal_stride: 2,
        temporal_kernel: 3,
        spatial_stride: 4,
        neighbors: 4,
        radius: 0.9,
        d_model: 8,
        intra_blocks: 1,
        inter_blocks: 1,
        n_state: 4,
        conv_width: 3,
        intra_order: ScanOrder::sequential(AxisKey::X),
        inter_order: ScanOrder::cross(AxisKey::Xzy),
        ..Mamba4DConfig::default()
    }
}

fn random_video(frames: usize, points: usize, channels: usize, labels: Labels, seed: u64) -> anyhow::Result<PointCloudVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..frames * points).map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))).collect();
    let feats = (0..frames * points * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(PointCloudVideo::new(frames, points, coords, channels, feats, labels)?)
}

/// Per-parameter relative errors of the full model loss.
fn fd_params(store: &ParamStore, f: &dyn Fn(&mut Tape, &ParamStore) -> anyhow::Result<Var>) -> anyhow::Result<Vec<(String, f64)>> {
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let mut with_grads = store.clone();
    with_grads.zero_grads();
    grads.accumulate_into(&mut with_grads)?;
    let value = |s: &ParamStore| -> anyhow::Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.value(l).item())
    };
    let mut probe = store.clone();
    let mut out = Vec::new();
    for id in store.ids() {
        let n = store.get(id).numel();
        let analytic = with_grads.get(id).grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let mut numeric = Vec::with_capacity(n);
        for j in 0..n {
            let orig = store.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + FD_STEP;
            let up = value(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig - FD_STEP;
            let down = value(&probe)?;
            probe.get_mut(id).data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        out.push((store.name(id).to_owned(), rel_err(&analytic, &numeric)));
    }
    Ok(out)
}

fn gradcheck_suite() -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_op = (0.0f64, "");
    let mut cases = op_cases(&mut rng);
    // the scan needs positive step sizes and a negative state matrix
    cases.push((
        "selective_scan",
        vec![
            Tensor::randn([2, 5, 3], 1.0, &mut rng),
            uniform(&[2, 5, 3], 0.1, 1.0, &mut rng),
            uniform(&[3, 4], -2.0, -0.2, &mut rng),
            Tensor::randn([2, 5, 4], 1.0, &mut rng),
            Tensor::randn([2, 5, 4], 1.0, &mut rng),
            Tensor::randn([3], 1.0, &mut rng),
        ],
        Box::new(|t, v| {
            let y = t.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5])?;
            project(t, y, 19)
        }),
    ));
    let op_count = cases.len();
    for (name, inputs, f) in &cases {
        let e = fd_inputs(inputs, f.as_ref())?;
        if e > worst_op.0 || worst_op.1.is_empty() {
            worst_op = (e, name);
        }
    }

    let tasks = [
        (TaskKind::Recognition, Labels::Video(1)),
        (TaskKind::ActionSegmentation, Labels::Frame(vec![0, 0, 1, 2])),
        (TaskKind::SemanticSegmentation, Labels::Point((0..64).map(|i| (i * 7 % 3) as u32).collect())),
    ];
    let mut worst_model = (0.0f64, String::new());
    for (k, (task, labels)) in tasks.into_iter().enumerate() {
        let video = random_video(4, 16, 2, labels, 20 + k as u64)?;
        let (model, mut store) = Mamba4D::init(micro_config(task), 7)?;
        // move every parameter off its init so all paths carry gradient above FD noise
        let mut prng = ChaCha8Rng::seed_from_u64(99);
        for id in store.ids().collect::<Vec<_>>() {
            let log = store.name(id).ends_with("a_log");
            for v in store.get_mut(id).data_mut() {
                *v += if log { prng.random_range(-0.2..0.2) } else { prng.random_range(-0.3..0.3) };
            }
        }
        let prep = model.prepare(&video)?;
        let weights = [1.0, 0.5, 2.0];
        for (name, e) in fd_params(&store, &|t, s| Ok(model.loss(t, s, &prep, Some(&weights))?))? {
            if e > worst_model.0 {
                worst_model = (e, format!("{task}/{name}"));
            }
        }
    }
    outcome(
        worst_op.0 <= 1e-4 && worst_model.0 <= 1e-3,
        format!(
            "{op_count} primitive cases worst {:.2e} ({}, tol 1e-4); micro model (T=4 N=16 K=4 d=8, 3 tasks) worst {:.2e} ({}, tol 1e-3)",
            worst_op.0, worst_op.1, worst_model.0, worst_model.1
        ),
    )
}

// ------------------------------------------------------------------- geometry

fn sq(a: Point3, b: Point3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

/// Brute force: each step recomputes every point's distance to the chosen set.
fn fps_reference(points: &[Point3], n: usize) -> Vec<usize> {
    let mut chosen = vec![0];
    while chosen.len() < n {
        let score = |i: usize| chosen.iter().map(|&c| sq(points[c], points[i])).fold(f64::INFINITY, f64::min);
        let mut best = 0;
        for i in 1..points.len() {
            if score(i) > score(best) {
                best = i;
            }
        }
        chosen.push(best);
    }
    chosen
}

fn knn_reference(q: Point3, points: &[Point3], k: usize, radius: f64) -> (Vec<usize>, usize) {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, &p)| (sq(q, p), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let inside: Vec<usize> = all.iter().filter(|(d, _)| *d <= radius * radius).map(|&(_, i)| i).take(k).collect();
    let within = inside.len();
    let pad = inside.first().copied().unwrap_or(all[0].1);
    let mut idx = inside;
    idx.resize(k, pad);
    (idx, within)
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    // a coarse grid on some instances forces distance ties and duplicates
    let grid = rng.random_bool(0.3);
    (0..n)
        .map(|_| {
            [0, 1, 2].map(|_| {
                let v: f64 = rng.random_range(-1.0..1.0);
                if grid {
                    (v * 2.0).round() / 2.0
                } else {
                    v
                }
            })
        })
        .collect()
}

fn geometry_oracles() -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut fps_bad, mut knn_bad) = (0, 0);
    for _ in 0..500 {
        let pts = random_cloud(rng.random_range(1..=64), &mut rng);
        let m = rng.random_range(1..=pts.len());
        fps_bad += usize::from(farthest_point_sampling(&pts, m)? != fps_reference(&pts, m));

        let cloud = random_cloud(rng.random_range(1..=256), &mut rng);
        let q = random_cloud(1, &mut rng)[0];
        let (k, r) = (rng.random_range(1..=32), rng.random_range(0.05..1.5));
        let got = knn_radius(q, &cloud, k, r)?;
        knn_bad += usize::from((got.indices, got.within) != knn_reference(q, &cloud, k, r));
    }
    outcome(fps_bad == 0 && knn_bad == 0, format!("500 instances: FPS mismatches {fps_bad}, KNN mismatches {knn_bad}"))
}

// ------------------------------------------------------------------ partition

fn partition_counts() -> anyhow::Result<Outcome> {
    let mut notes = Vec::new();
    let mut ok = true;
    for (t, s) in [(24, 2), (32, 2), (36, 2), (7, 3)] {
        for k in [1, 3, 5] {
            let p = partition(t, s, k)?;
            let good = p.anchors.len() == t / s && p.clips.len() == t / s && p.clips.iter().all(|c| c.len() == k);
            ok &= good;
            if !good {
                notes.push(format!("T={t} s_t={s} k_t={k}: {} anchors", p.anchors.len()));
            }
        }
        // the same counts through the model's tube construction
        let cfg = Mamba4DConfig { temporal_stride: s, spatial_stride: 8, d_model: 8, ..micro_config(TaskKind::Recognition) };
        let (model, _) = Mamba4D::init(cfg, 0)?;
        let prep = model.prepare(&random_video(t, 16, 2, Labels::None, t as u64)?)?;
        let good = prep.tubes.anchor_frames == t / s && prep.tubes.tubes.iter().all(|tube| tube.frames.len() == 3);
        ok &= good;
        if !good {
            notes.push(format!("T={t} s_t={s}: model built {} anchor frames", prep.tubes.anchor_frames));
        }
    }
    let detail = if ok { "anchor count = floor(T/s_t), every clip has k_t frames".to_owned() } else { notes.join("; ") };
    outcome(ok, detail)
}

// -------------------------------------------------------------- serialization

fn serialization_laws() -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let orders = ScanOrder::all_inter();
    let mut failures = Vec::new();
    if orders.len() != 19 {
        failures.push(format!("{} inter orders", orders.len()));
    }
    for _ in 0..50 {
        let (f, n) = (rng.random_range(1..=5), rng.random_range(1..=12));
        let frames: Vec<Vec<Point3>> = (0..f).map(|_| random_cloud(n, &mut rng)).collect();
        let tokens: Vec<f64> = (0..f * n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        for &o in &orders {
            let ser = serialize(&frames, o)?;
            let mut seen = vec![0; f * n];
            ser.permutation.iter().for_each(|&t| seen[t] += 1);
            let inverse_ok = ser.permutation.iter().enumerate().all(|(pos, &t)| ser.inverse[t] == pos);
            if seen.iter().any(|&c| c != 1) || !inverse_ok {
                failures.push(format!("{o} is not a bijection"));
            }
            if deserialize(&apply(&tokens, 2, &ser)?, 2, &ser)? != tokens {
                failures.push(format!("{o} round trip"));
            }
        }
        for axis in AxisKey::ALL {
            let one = &frames[..1];
            if serialize(one, ScanOrder::cross(axis))? != serialize(one, ScanOrder::sequential(axis))? {
                failures.push(format!("cross != sequential at F=1 for {}", axis.name()));
            }
        }
    }
    let example = vec![vec![[5.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![[4.0, 0.0, 0.0], [2.0, 0.0, 0.0]]];
    let cross = serialize(&example, ScanOrder::cross(AxisKey::X))?.permutation;
    let seq = serialize(&example, ScanOrder::sequential(AxisKey::X))?.permutation;
    // tokens are frame-major: (f0,5)=0 (f0,1)=1 (f1,4)=2 (f1,2)=3
    if cross != [0, 2, 1, 3] {
        failures.push(format!("cross/X example {cross:?} != [0, 2, 1, 3]"));
    }
    if seq != [1, 0, 3, 2] {
        failures.push(format!("sequential/X example {seq:?} != [1, 0, 3, 2]"));
    }
    failures.dedup();
    let detail = if failures.is_empty() {
        "19 orders bijective, round trips exact, cross == seq at F=1, worked examples match".to_owned()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

// ----------------------------------------------------------- identity at init

fn identity_at_init() -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(128);
    let intra = BlockStack::new(&mut store, "intra", 12, cfg, &mut rng)?;
    let inter = BlockStack::new(&mut store, "inter", 4, cfg, &mut rng)?;
    let tokens = Tensor::randn([8, 6, 128], 1.0, &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(tokens.clone());
    let y = intra.forward(&mut tape, &store, x)?;
    let y = tape.reshape(y, [1, 48, 128])?;
    let y = inter.forward(&mut tape, &store, y)?;
    let stack_dev = tape.value(y).max_abs_diff(&tokens.reshape([1, 48, 128])?);

    // default configuration end to end: blocks on vs. bypassed
    let (model, store) = Mamba4D::init(Mamba4DConfig::default(), 5)?;
    let prep = model.prepare(&random_video(8, 64, 0, Labels::None, 6)?)?;
    let mut bypass = model.clone();
    bypass.intra.enabled = false;
    bypass.inter.enabled = false;
    let mut tape = Tape::new();
    let a = model.features(&mut tape, &store, &prep)?;
    let b = bypass.features(&mut tape, &store, &prep)?;
    let model_dev = tape.value(a).max_abs_diff(tape.value(b));
    outcome(
        stack_dev == 0.0 && model_dev == 0.0,
        format!("12 intra + 4 inter blocks at d=128: max|dev| = {stack_dev:e}; default model vs bypass: {model_dev:e}"),
    )
}

// ----------------------------------------------------------------- efficiency

fn efficiency_shape() -> anyhow::Result<Outcome> {
    let lengths = [256, 512, 1024, 2048, 4096, 8192];
    let mut records: Vec<BenchRecord> = Vec::new();
    for k in [BenchKernel::SsmParallel, BenchKernel::Attention, BenchKernel::SsmSequential] {
        for &l in &lengths {
            records.push(bench_kernel(k, l, 32, BenchPolicy::default(), 0)?);
        }
    }
    let peak = |k: BenchKernel| records.iter().find(|r| r.kernel == k && r.len == 8192).map(|r| r.peak_bytes).unwrap_or(0);
    let ssm = runtime_slope(&records, BenchKernel::SsmParallel)?;
    let seq = runtime_slope(&records, BenchKernel::SsmSequential)?;
    let attn = runtime_slope(&records, BenchKernel::Attention)?;
    let ratio = peak(BenchKernel::Attention) as f64 / peak(BenchKernel::SsmParallel).max(1) as f64;
    outcome(
        (0.8..=1.3).contains(&ssm) && attn >= 1.7 && ratio >= 8.0,
        format!(
            "slopes ssm_par {ssm:.3} (ssm_seq {seq:.3}) in [0.8, 1.3], attention {attn:.3} >= 1.7; peak ratio at L=8192 {ratio:.1} >= 8"
        ),
    )
}

// ------------------------------------------------------------------- learning

fn learning_run(epochs: usize, stop: bool) -> anyhow::Result<Vec<EpochReport>> {
    let spec = SyntheticSpec::default();
    let videos = generate_synthetic(&spec)?;
    let cfg = Mamba4DConfig { d_model: 64, intra_blocks: 4, inter_blocks: 2, neighbors: 8, ..Mamba4DConfig::default() };
    let (model, mut store) = Mamba4D::init(cfg, 0)?;
    let prep = videos.iter().map(|v| model.prepare(v)).collect::<m4d_core::Result<Vec<_>>>()?;
    let (tr, te) = prep.split_at(160);
    let opts = TrainOptions {
        epochs,
        stop_at_train_accuracy: stop.then_some(95.0),
        stop_at_eval_accuracy: stop.then_some(85.0),
        ..TrainOptions::default()
    };
    Ok(train(&model, &mut store, tr, Some(te), &opts, |_| Ok(()))?.epochs)
}

fn learning_sanity() -> anyhow::Result<Outcome> {
    let acc = |m: &[(String, f64)]| m.iter().find(|(k, _)| k == "accuracy").map(|p| p.1).unwrap_or(0.0);
    let reports = learning_run(50, true)?;
    let last = reports.last().ok_or_else(|| anyhow!("no epochs"))?;
    let (train_acc, eval_acc) = (acc(&last.train), acc(last.eval.as_deref().unwrap_or(&[])));
    let reached = train_acc >= 95.0 && eval_acc >= 85.0;
    let again = learning_run(2, false)?;
    let deterministic = reports.len() >= 2 && again[..] == reports[..2];
    outcome(
        reached && deterministic,
        format!(
            "epoch {}: train {train_acc:.2}% held-out {eval_acc:.2}% (need 95/85 within 50); rerun of the first 2 epochs {}",
            last.epoch + 1,
            if deterministic { "bit-identical" } else { "differs" }
        ),
    )
}

// -------------------------------------------------------------------- metrics

fn labels(s: &str) -> Vec<usize> {
    s.bytes().map(|b| (b - b'A') as usize).collect()
}

fn metric_oracles() -> anyhow::Result<Outcome> {
    // (pred, truth, edit, [F1@10, F1@25, F1@50]), all by hand
    let fixtures: [(&str, &str, f64, [f64; 3]); 10] = [
        ("AAAABBBB", "AAAABBBB", 100.0, [100.0, 100.0, 100.0]),
        // A segments overlap at IoU 2/5 = 0.4: TP at 0.25, FP at 0.5
        ("AAAAABBBBB", "AABBBBBBBB", 100.0, [100.0, 100.0, 50.0]),
        ("AABBAA", "AABBBB", 200.0 / 3.0, [80.0, 80.0, 80.0]),
        ("AAAA", "BBBB", 0.0, [0.0, 0.0, 0.0]),
        ("ABBBBBBBBB", "AAAAABBBBB", 100.0, [100.0, 50.0, 50.0]),
        ("AABAA", "AAAAA", 100.0 / 3.0, [50.0, 50.0, 0.0]),
        ("AABBCC", "AAABBC", 100.0, [100.0, 100.0, 200.0 / 3.0]),
        ("ABAB", "AABB", 50.0, [200.0 / 3.0, 200.0 / 3.0, 200.0 / 3.0]),
        ("BBBB", "AABB", 50.0, [200.0 / 3.0, 200.0 / 3.0, 200.0 / 3.0]),
        ("CCAAAABB", "AAAABBBB", 200.0 / 3.0, [80.0, 80.0, 40.0]),
    ];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let mut bad = Vec::new();
    for (i, (p, t, edit, f1)) in fixtures.iter().enumerate() {
        let (p, t) = (labels(p), labels(t));
        let e = edit_score(&p, &t)?;
        if !close(e, *edit) {
            bad.push(format!("#{i} edit {e}"));
        }
        for (tau, want) in [0.10, 0.25, 0.50].into_iter().zip(f1) {
            let got = segmental_f1(&p, &t, tau)?;
            if !close(got, *want) {
                bad.push(format!("#{i} F1@{tau} {got}"));
            }
        }
    }
    // mIoU: IoU0 = 1/2, IoU1 = 0
    let (p, t) = ([0, 0], [0, 1]);
    if !close(accuracy(&p, &t)?, 50.0) || !close(mean_iou(&p, &t, 2)?, 25.0) {
        bad.push("mIoU fixture 1".into());
    }
    // class 3 absent from both: IoU0 = 1/3, IoU1 = 2/3, IoU2 = 1/2
    let (p, t) = ([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0]);
    if !close(accuracy(&p, &t)?, 200.0 / 3.0) || !close(mean_iou(&p, &t, 4)?, 50.0) {
        bad.push("mIoU fixture 2".into());
    }
    let detail = if bad.is_empty() {
        "10 edit/F1 fixtures and 2 mIoU fixtures match hand values".to_owned()
    } else {
        bad.join("; ")
    };
    outcome(bad.is_empty(), detail)
}

// ------------------------------------------------------------------- ablation

/// Row-structure config: tiny enough to train 29 rows quickly.
const STRUCTURE_CONFIG: &str = "task = recognition\nclasses = 2\nd_model = 8\nintra_blocks = 1\ninter_blocks = 1\n\
neighbors = 4\nspatial_stride = 8\nepochs = 1\nbatch_size = 3\nholdout = 0.34\n\
synth_videos = 6\nsynth_frames = 4\nsynth_points = 32\n";

/// Toy scale for the module-direction check.
const MODULES_CONFIG: &str = include_str!("data/ablation_toy.txt");

fn run_ablate(dir: &Path, axis: &str, config: &str, extra: &[&str]) -> anyhow::Result<Vec<(String, f64)>> {
    let path = dir.join(format!("{axis}.txt"));
    std::fs::write(&path, config)?;
    let out = Command::new(env!("CARGO_BIN_EXE_m4d"))
        .args(["ablate", "--axis", axis, "--config"])
        .arg(&path)
        .args(extra)
        .env_remove("M4D_SEED")
        .output()?;
    ensure!(out.status.success(), "m4d ablate {axis} failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout)?;
    text.lines()
        .filter(|l| l.starts_with("row="))
        .map(|l| {
            let mut fields = l.split_whitespace();
            let label = fields.next().unwrap_or_default().trim_start_matches("row=").to_owned();
            let value = fields
                .next()
                .and_then(|f| f.split_once('='))
                .context("row without a score")?
                .1
                .parse()?;
            Ok((label, value))
        })
        .collect()
}

fn ablation_machinery() -> anyhow::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut counts = Vec::new();
    let mut ok = true;
    for (axis, want) in [("modules", 4), ("blocks", 4), ("pe", 3), ("order", 29), ("stride_radius", 8)] {
        let rows = run_ablate(dir.path(), axis, STRUCTURE_CONFIG, &[])?;
        let mut good = rows.len() == want;
        if axis == "order" {
            let intra = rows.iter().filter(|r| r.0.starts_with("intra_order=")).count();
            good &= intra == 10 && rows.len() - intra == 19;
        }
        ok &= good;
        counts.push(format!("{axis} {}", rows.len()));
    }
    let rows = run_ablate(dir.path(), "modules", MODULES_CONFIG, &["--repeats", "2"])?;
    let score = |label: &str| rows.iter().find(|r| r.0 == label).map(|r| r.1).ok_or_else(|| anyhow!("missing row {label}"));
    let (both, intra, inter, none) =
        (score("intra=on,inter=on")?, score("intra=on,inter=off")?, score("intra=off,inter=on")?, score("intra=off,inter=off")?);
    let direction = both >= intra && both >= inter;
    outcome(
        ok && direction,
        format!(
            "rows: {}; toy accuracy both {both:.2} vs intra-only {intra:.2}, inter-only {inter:.2} (neither {none:.2})",
            counts.join(", ")
        ),
    )
}
