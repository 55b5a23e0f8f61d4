use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

fn static_video(frames: usize, points: &[Point3]) -> PointCloudVideo {
    let coords = (0..frames).flat_map(|_| points.iter().copied()).collect();
    PointCloudVideo::new(frames, points.len(), coords, 0, Vec::new(), Labels::None).unwrap()
}

/// Greedy FPS recomputing every min-distance from scratch.
fn fps_oracle(points: &[Point3], n: usize) -> Vec<usize> {
    let mut chosen = vec![0usize];
    while chosen.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..points.len() {
            let d = chosen.iter().map(|&c| dist2(points[i], points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// Exhaustive selection: repeatedly extract the closest remaining point.
fn knn_oracle(q: Point3, points: &[Point3], k: usize, r: f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..points.len()).filter(|&i| dist2(q, points[i]).sqrt() <= r).collect();
    let mut out = Vec::new();
    while out.len() < k && !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .min_by(|a, b| dist2(q, points[*a.1]).partial_cmp(&dist2(q, points[*b.1])).unwrap().then(a.1.cmp(b.1)))
            .unwrap();
        out.push(remaining.remove(pos));
    }
    let pad = out.first().copied().unwrap_or_else(|| {
        (0..points.len()).min_by(|&a, &b| dist2(q, points[a]).partial_cmp(&dist2(q, points[b])).unwrap().then(a.cmp(&b))).unwrap()
    });
    out.resize(k, pad);
    out
}

#[test]
fn anchor_frame_examples() {
    assert_eq!(select_anchor_frames(24, 2).unwrap(), (0..12).map(|k| 2 * k + 1).collect::<Vec<_>>());
    assert_eq!(select_anchor_frames(5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
    assert_eq!(select_anchor_frames(7, 3).unwrap(), vec![1, 4]);
    assert!(select_anchor_frames(3, 4).is_err());
    assert!(select_anchor_frames(3, 0).is_err());
}

#[test]
fn clip_examples() {
    assert_eq!(build_clips(&[5], 3, 10).unwrap().clips, vec![vec![4, 5, 6]]);
    assert_eq!(build_clips(&[0], 3, 10).unwrap().clips, vec![vec![0, 0, 1]]);
    assert_eq!(build_clips(&[9], 5, 10).unwrap().clips, vec![vec![7, 8, 9, 9, 9]]);
    assert_eq!(build_clips(&[2], 1, 10).unwrap().clips, vec![vec![2]]);
    assert!(build_clips(&[2], 2, 10).is_err());
}

#[test]
fn partition_counts() {
    for (t, s) in [(24, 2), (32, 2), (36, 2), (7, 3)] {
        let p = partition(t, s, 3).unwrap();
        assert_eq!(p.anchors.len(), t / s);
        assert!(p.clips.iter().all(|c| c.len() == 3 && c.iter().all(|&f| f < t)));
    }
}

#[test]
fn fps_examples() {
    let line: Vec<Point3> = [0.0, 1.0, 2.0, 10.0].iter().map(|&x| [x, 0.0, 0.0]).collect();
    assert_eq!(farthest_point_sampling(&line, 2).unwrap(), vec![0, 3]);
    assert_eq!(farthest_point_sampling(&line, 1).unwrap(), vec![0]);
    let mut all = farthest_point_sampling(&line, 4).unwrap();
    all.sort();
    assert_eq!(all, vec![0, 1, 2, 3]);
    assert!(farthest_point_sampling(&line, 5).is_err());
    assert!(farthest_point_sampling(&line, 0).is_err());
}

#[test]
fn fps_ties_take_lowest_index() {
    let pts: Vec<Point3> = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    assert_eq!(farthest_point_sampling(&pts, 2).unwrap(), vec![0, 1]);
}

fn min_pairwise(points: &[Point3], idx: &[usize]) -> f64 {
    let mut m = f64::INFINITY;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            m = m.min(dist2(points[i], points[j]));
        }
    }
    m
}

#[test]
fn fps_spreads_better_than_random_subsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let pts = random_points(64, &mut rng);
        let fps = farthest_point_sampling(&pts, 8).unwrap();
        let mut pool: Vec<usize> = (0..64).collect();
        for i in 0..8 {
            let j = rng.random_range(i..64);
            pool.swap(i, j);
        }
        assert!(min_pairwise(&pts, &fps) >= min_pairwise(&pts, &pool[..8]));
    }
}

#[test]
fn knn_examples() {
    let pts: Vec<Point3> = [0.5, 2.0, 0.1].iter().map(|&x| [x, 0.0, 0.0]).collect();
    let nb = knn_radius([0.0; 3], &pts, 2, 0.7).unwrap();
    assert_eq!(nb.indices, vec![2, 0]);
    assert_eq!(nb.within, 2);

    let nb = knn_radius([0.0; 3], &pts, 3, 0.3).unwrap();
    assert_eq!(nb.indices, vec![2, 2, 2]);
    assert_eq!(nb.within, 1);

    let nb = knn_radius([5.0, 0.0, 0.0], &pts, 2, 0.7).unwrap();
    assert_eq!(nb.indices, vec![1, 1]);
    assert_eq!(nb.within, 0);

    let nb = knn_radius([2.0, 0.0, 0.0], &pts, 1, 0.7).unwrap();
    assert_eq!(nb.indices, vec![1]);
    assert!(knn_radius([0.0; 3], &[], 1, 0.7).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_matches_oracle(n_pts in 1usize..=64, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(n_pts, &mut rng);
        let n = 1 + ((n_pts - 1) as f64 * frac) as usize;
        prop_assert_eq!(farthest_point_sampling(&pts, n).unwrap(), fps_oracle(&pts, n));
    }

    #[test]
    fn knn_matches_oracle(m in 1usize..=256, k in 1usize..40, r in 0.05f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_points(m, &mut rng);
        let q = random_points(1, &mut rng)[0];
        prop_assert_eq!(knn_radius(q, &pts, k, r).unwrap().indices, knn_oracle(q, &pts, k, r));
    }
}

#[test]
fn tube_counts_match_strides() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pts = random_points(2048, &mut rng);
    let video = static_video(3, &pts);
    let p = partition(3, 2, 3).unwrap();
    let set = build_point_tubes(&video, &p, 32, 4, 0.7).unwrap();
    assert_eq!(set.per_frame, 64);
    assert_eq!(set.tubes.len(), 2048 / 32);
}

#[test]
fn static_video_tubes_repeat_neighbors_and_stay_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts = random_points(128, &mut rng);
    let video = static_video(8, &pts);
    let p = partition(8, 2, 3).unwrap();
    let set = build_point_tubes(&video, &p, 16, 6, 0.7).unwrap();
    assert_eq!(set.tubes.len(), 4 * 8);
    for tube in &set.tubes {
        assert_eq!(tube.neighbor_count(), 3 * 6);
        let first = &tube.frames[0].neighbors;
        assert!(tube.frames.iter().all(|f| &f.neighbors == first));
        for (fi, tf) in tube.frames.iter().enumerate() {
            assert!(tf.dt.unsigned_abs() <= 1);
            let d = tube.displacement(&video, fi, 0);
            assert_eq!(d[3], tf.dt as f64);
        }
    }
    assert!(tubes_are_local(&video, &set, 0.7));
}

#[test]
fn video_validation() {
    assert!(PointCloudVideo::new(2, 2, vec![[0.0; 3]; 3], 0, vec![], Labels::None).is_err());
    assert!(PointCloudVideo::new(1, 1, vec![[f64::NAN, 0.0, 0.0]], 0, vec![], Labels::None).is_err());
    assert!(PointCloudVideo::new(2, 1, vec![[0.0; 3]; 2], 0, vec![], Labels::Frame(vec![1])).is_err());
}

#[test]
fn pcv_round_trip_and_multiple_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coords: Vec<Point3> = random_points(6, &mut rng).iter().map(|p| p.map(|v| (v as f32) as f64)).collect();
    let a = PointCloudVideo::new(2, 3, coords.clone(), 2, (0..12).map(|v| v as f64 * 0.5).collect(), Labels::Point(vec![0, 1, 2, 3, 4, 5])).unwrap();
    let b = PointCloudVideo::new(3, 2, coords, 0, vec![], Labels::Video(7)).unwrap();
    let c = static_video(2, &[[0.25, 0.5, 1.0]]);
    let mut buf = Vec::new();
    for v in [&a, &b, &c] {
        write_pcv(v, &mut buf).unwrap();
    }
    assert!(buf.starts_with(b"pcv v1 T=2 N=3 C=2 label_kind=point\n"));
    let parsed = parse_pcv(&buf).unwrap();
    assert_eq!(parsed, vec![a, b, c]);

    assert!(parse_pcv(&buf[..buf.len() - 1]).is_err());
    assert!(parse_pcv(b"pcv v2 T=1 N=1 C=0 label_kind=none\n").is_err());
    assert!(parse_pcv(b"pcv v1 T=1 N=1 C=0 label_kind=weird\n").is_err());
}
