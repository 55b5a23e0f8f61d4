use super::video::{dist2, Point3};
use crate::error::{Error, Result};

/// Greedy farthest point sampling seeded at index 0; ties go to the lowest index.
pub fn farthest_point_sampling(points: &[Point3], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > points.len() {
        return Err(Error::invalid(format!("cannot sample {n} of {} points", points.len())));
    }
    let mut chosen = Vec::with_capacity(n);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..n {
        chosen.push(next);
        let p = points[next];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, q) in points.iter().enumerate() {
            let d = dist2(p, *q).min(min_d[i]);
            min_d[i] = d;
            if d > best.0 {
                best = (d, i);
            }
        }
        next = best.1;
    }
    Ok(chosen)
}

/// Result of a radius-bounded nearest-neighbour query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbors {
    /// Exactly `K` point indices, nearest first.
    pub indices: Vec<usize>,
    /// How many leading entries are distinct points within the radius; the rest are padding.
    pub within: usize,
}

/// The `k` nearest points within `radius` of `query` (ascending distance, index
/// tie-break). Short results are padded with the nearest qualifying point, or the
/// overall nearest when none qualify.
pub fn knn_radius(query: Point3, points: &[Point3], k: usize, radius: f64) -> Result<Neighbors> {
    if points.is_empty() {
        return Err(Error::invalid("neighbour search over an empty point set"));
    }
    if k == 0 || !(radius > 0.0) {
        return Err(Error::invalid(format!("knn with K={k}, radius={radius}")));
    }
    let r2 = radius * radius;
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(query, *p), i))
        .filter(|&(d, _)| d <= r2)
        .collect();
    // total order: distance, then index
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    let within = cand.len();
    let mut indices: Vec<usize> = cand.into_iter().map(|(_, i)| i).collect();
    let pad = match indices.first() {
        Some(&i) => i,
        None => {
            let mut best = (f64::INFINITY, 0);
            for (i, p) in points.iter().enumerate() {
                let d = dist2(query, *p);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        }
    };
    indices.resize(k, pad);
    Ok(Neighbors { indices, within })
}
