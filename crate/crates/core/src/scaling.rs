//! Runtime and peak-memory scaling of the sequence kernels.
//!
//! Peak memory is observed through [`TrackingAllocator`], which a binary must
//! install with `#[global_allocator]`; without it peaks read as zero.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::ssm::{attention_reference, selective_scan_parallel, selective_scan_sequential, SsmParams, DEFAULT_N_STATE};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

/// System allocator that records live and peak heap bytes.
pub struct TrackingAllocator;

impl TrackingAllocator {
    pub const fn new() -> Self {
        Self
    }
}

impl Default for TrackingAllocator {
    fn default() -> Self {
        Self::new()
    }
}

fn track_alloc(size: usize) {
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

// SAFETY: every call is forwarded unchanged to `System`; only counters are added.
unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            track_alloc(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            track_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            track_alloc(new_size);
        }
        p
    }
}

/// Live heap bytes seen by the tracking allocator.
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// Resets the peak to the current live size and returns that baseline.
pub fn reset_peak() -> usize {
    let now = current_bytes();
    PEAK.store(now, Ordering::Relaxed);
    now
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Benchmarked sequence kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchKernel {
    SsmSequential,
    SsmParallel,
    Attention,
}

impl BenchKernel {
    pub const ALL: [BenchKernel; 3] = [BenchKernel::SsmSequential, BenchKernel::SsmParallel, BenchKernel::Attention];

    pub fn name(self) -> &'static str {
        match self {
            BenchKernel::SsmSequential => "ssm_seq",
            BenchKernel::SsmParallel => "ssm_par",
            BenchKernel::Attention => "attention",
        }
    }
}

impl fmt::Display for BenchKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchKernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown kernel {s:?} (expected ssm_seq, ssm_par or attention)")))
    }
}

/// One `kernel=<name> L=<int> d=<int> wall_ns=<int> peak_bytes=<int>` record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchRecord {
    pub kernel: BenchKernel,
    pub len: usize,
    pub d: usize,
    /// Median wall time over the measured repetitions.
    pub wall_ns: u128,
    /// Peak heap growth above the pre-run baseline.
    pub peak_bytes: usize,
}

impl fmt::Display for BenchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kernel={} L={} d={} wall_ns={} peak_bytes={}",
            self.kernel, self.len, self.d, self.wall_ns, self.peak_bytes
        )
    }
}

impl FromStr for BenchRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("bench record", format!("malformed line {s:?}"));
        let mut fields = s.split_whitespace().map(|f| f.split_once('=').ok_or_else(bad));
        let mut next = |key: &str| -> Result<&str> {
            let (k, v) = fields.next().ok_or_else(bad)??;
            if k == key {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        let kernel = next("kernel")?.parse()?;
        let len = next("L")?.parse().map_err(|_| bad())?;
        let d = next("d")?.parse().map_err(|_| bad())?;
        let wall_ns = next("wall_ns")?.parse().map_err(|_| bad())?;
        let peak_bytes = next("peak_bytes")?.parse().map_err(|_| bad())?;
        Ok(Self { kernel, len, d, wall_ns, peak_bytes })
    }
}

/// Repetition policy: `warmup` unmeasured runs, then the median of `repeats`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchPolicy {
    pub warmup: usize,
    pub repeats: usize,
}

impl Default for BenchPolicy {
    fn default() -> Self {
        Self { warmup: 1, repeats: 5 }
    }
}

enum Inputs {
    Ssm(SsmParams),
    Attention([Tensor; 3]),
}

fn inputs(kernel: BenchKernel, d: usize, rng: &mut ChaCha8Rng) -> Result<Inputs> {
    let s = 1.0 / (d as f64).sqrt();
    Ok(match kernel {
        BenchKernel::Attention => Inputs::Attention([
            Tensor::randn([d, d], s, rng),
            Tensor::randn([d, d], s, rng),
            Tensor::randn([d, d], s, rng),
        ]),
        _ => Inputs::Ssm(SsmParams::with_projections(
            Tensor::randn([d, DEFAULT_N_STATE], s, rng),
            Tensor::randn([d, DEFAULT_N_STATE], s, rng),
            Tensor::randn([d, d], s, rng),
        )?),
    })
}

fn run(kernel: BenchKernel, inputs: &Inputs, x: &Tensor) -> Result<Tensor> {
    match (kernel, inputs) {
        (BenchKernel::SsmSequential, Inputs::Ssm(p)) => selective_scan_sequential(p, x),
        (BenchKernel::SsmParallel, Inputs::Ssm(p)) => selective_scan_parallel(p, x),
        (BenchKernel::Attention, Inputs::Attention([q, k, v])) => attention_reference(x, q, k, v),
        _ => unreachable!("inputs are built for their kernel"),
    }
}

/// Times `kernel` on a random `[len, d]` input.
pub fn bench_kernel(kernel: BenchKernel, len: usize, d: usize, policy: BenchPolicy, seed: u64) -> Result<BenchRecord> {
    if len == 0 || d == 0 || policy.repeats == 0 {
        return Err(Error::invalid("bench needs positive L, d and repeats"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ins = inputs(kernel, d, &mut rng)?;
    let x = Tensor::randn([len, d], 1.0, &mut rng);
    for _ in 0..policy.warmup {
        std::hint::black_box(run(kernel, &ins, &x)?);
    }
    let mut times = Vec::with_capacity(policy.repeats);
    let mut peak = 0;
    for _ in 0..policy.repeats {
        let base = reset_peak();
        let t = Instant::now();
        let y = run(kernel, &ins, &x)?;
        times.push(t.elapsed().as_nanos());
        peak = peak.max(peak_bytes().saturating_sub(base));
        std::hint::black_box(y);
    }
    times.sort_unstable();
    Ok(BenchRecord { kernel, len, d, wall_ns: times[times.len() / 2], peak_bytes: peak })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("a log-log fit needs at least two positive points"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("a log-log fit needs distinct lengths"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Runtime slope of one kernel from its records.
pub fn runtime_slope(records: &[BenchRecord], kernel: BenchKernel) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        records.iter().filter(|r| r.kernel == kernel).map(|r| (r.len as f64, r.wall_ns as f64)).collect();
    loglog_slope(&pts)
}

/// `256, 512, ..., max` (powers of two).
pub fn doubling_lengths(min: usize, max: usize) -> Vec<usize> {
    std::iter::successors(Some(min.max(1)), |&l| Some(l * 2)).take_while(|&l| l <= max).collect()
}
