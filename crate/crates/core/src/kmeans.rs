//! Lloyd k-means with k-means++ initialization.
//!
//! The procedure is pinned down exactly so an independent implementation can
//! reproduce it bit-for-bit from this description:
//!
//! 1. RNG: `ChaCha12Rng::seed_from_u64(seed)`, stream 0, consumed one `u64` at
//!    a time.
//! 2. k-means++: the first centroid is `uniform_index(n)`. Each subsequent
//!    centroid is sampled with probability proportional to the squared L2
//!    distance to the nearest chosen centroid, by drawing
//!    `u = uniform_halfopen01() * total_weight` and walking the cumulative
//!    weights front to back (first prefix sum strictly greater than `u`; if
//!    all weights are zero, index 0).
//! 3. Lloyd iterations (at most `max_iters`): assign every point to its
//!    nearest centroid (ties to the lowest centroid index), recompute each
//!    centroid as the f64 mean of its members, and re-seed every empty
//!    cluster from the point farthest from its assigned centroid (largest
//!    squared distance, ties to the lowest point index; one point per empty
//!    cluster, scanning points in order).
//! 4. Stop early when the relative distortion improvement falls below 1e-4.
//!
//! Distances are accumulated in f64; centroids are stored as f32.

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{stream_rng, uniform_halfopen01, uniform_index};

/// Convergence threshold on the relative change of mean distortion.
pub const RELATIVE_DISTORTION_EPSILON: f64 = 1e-4;

/// Default Lloyd iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 25;

/// Trained centroids plus the per-iteration distortion trace.
#[derive(Debug, Clone)]
pub struct KMeans {
    centroids: Vec<f32>,
    k: usize,
    dim: usize,
    /// Mean squared distance to the assigned centroid after each iteration.
    pub distortion_trace: Vec<f64>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn centroids_flat(&self) -> &[f32] {
        &self.centroids
    }

    pub fn from_centroids(centroids: Vec<f32>, k: usize, dim: usize) -> Self {
        assert_eq!(centroids.len(), k * dim);
        Self {
            centroids,
            k,
            dim,
            distortion_trace: Vec::new(),
        }
    }

    /// Index of the nearest centroid by squared L2 distance, ties to the
    /// lowest index.
    pub fn assign(&self, point: &[f32]) -> usize {
        nearest_centroid(point, &self.centroids, self.k, self.dim).0
    }
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc
}

pub(crate) fn nearest_centroid(
    point: &[f32],
    centroids: &[f32],
    k: usize,
    dim: usize,
) -> (usize, f64) {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for c in 0..k {
        let d = squared_distance(point, &centroids[c * dim..(c + 1) * dim]);
        if d < best_dist {
            best_dist = d;
            best = c;
        }
    }
    (best, best_dist)
}

/// Trains k centroids on `points` (a flat `[n * dim]` buffer).
///
/// Deterministic given `seed`; rejects `n < k` and non-finite input.
pub fn train_kmeans(
    points: &[f32],
    dim: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeans> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidParameter(format!(
            "point buffer of {} values is not a multiple of dim {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means training data".into()));
    }

    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = stream_rng(seed, 0);

    // k-means++ initialization.
    let mut centroids = vec![0.0f32; k * dim];
    let first = uniform_index(&mut rng, n);
    centroids[..dim].copy_from_slice(point(first));
    let mut min_dist: Vec<f64> = par::map_indexed(n, |i| squared_distance(point(i), point(first)));
    for c in 1..k {
        let total: f64 = min_dist.iter().sum();
        let chosen = if total > 0.0 {
            let u = uniform_halfopen01(&mut rng) * total;
            let mut cum = 0.0;
            let mut chosen = 0;
            for (i, &w) in min_dist.iter().enumerate() {
                cum += w;
                if cum > u {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            0
        };
        centroids[c * dim..(c + 1) * dim].copy_from_slice(point(chosen));
        let new_centroid = point(chosen).to_vec();
        let updates = par::map_indexed(n, |i| squared_distance(point(i), &new_centroid));
        for (m, u) in min_dist.iter_mut().zip(updates) {
            if u < *m {
                *m = u;
            }
        }
    }

    // Lloyd iterations.
    let mut assignments = vec![0usize; n];
    let mut distortion_trace = Vec::new();
    let mut prev_distortion = f64::INFINITY;
    for _ in 0..max_iters {
        let assigned = par::map_indexed(n, |i| nearest_centroid(point(i), &centroids, k, dim));
        let mut distortion = 0.0;
        for (slot, (c, d)) in assignments.iter_mut().zip(&assigned) {
            *slot = *c;
            distortion += d;
        }
        distortion /= n as f64;
        distortion_trace.push(distortion);

        // Mean update in f64, sequential in point order.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            let p = point(i);
            let s = &mut sums[c * dim..(c + 1) * dim];
            for (acc, &v) in s.iter_mut().zip(p) {
                *acc += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
            }
        }

        // Empty clusters grab the farthest point from its current centroid.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut order: Vec<(f64, usize)> =
                assigned.iter().map(|&(_, d)| d).zip(0..n).collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (&slot, &(_, i)) in empties.iter().zip(order.iter()) {
                centroids[slot * dim..(slot + 1) * dim].copy_from_slice(point(i));
            }
        }

        if prev_distortion.is_finite() {
            let rel = if prev_distortion > 0.0 {
                (prev_distortion - distortion) / prev_distortion
            } else {
                0.0
            };
            if rel < RELATIVE_DISTORTION_EPSILON {
                break;
            }
        }
        prev_distortion = distortion;
    }

    Ok(KMeans {
        centroids,
        k,
        dim,
        distortion_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::fill_normal_f32;

    fn gaussian_points(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = stream_rng(seed, 1);
        let mut out = vec![0.0f32; n * dim];
        fill_normal_f32(&mut rng, 0.0, 1.0, &mut out);
        out
    }

    #[test]
    fn n_equal_k_gives_zero_distortion() {
        let points = gaussian_points(16, 4, 3);
        let km = train_kmeans(&points, 4, 16, 25, 0).unwrap();
        let last = *km.distortion_trace.last().unwrap();
        assert!(last <= 1e-12, "distortion {last}");
        // Every point is its own centroid.
        for i in 0..16 {
            let c = km.assign(&points[i * 4..(i + 1) * 4]);
            assert_eq!(km.centroid(c), &points[i * 4..(i + 1) * 4]);
        }
    }

    #[test]
    fn k_one_is_the_mean() {
        let points = gaussian_points(200, 6, 9);
        let km = train_kmeans(&points, 6, 1, 25, 0).unwrap();
        for j in 0..6 {
            let mean: f64 =
                (0..200).map(|i| points[i * 6 + j] as f64).sum::<f64>() / 200.0;
            assert!((km.centroid(0)[j] as f64 - mean).abs() < 1e-5);
        }
    }

    #[test]
    fn distortion_never_increases() {
        let points = gaussian_points(1000, 8, 17);
        let km = train_kmeans(&points, 8, 16, 25, 5).unwrap();
        assert!(!km.distortion_trace.is_empty());
        for w in km.distortion_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "distortion rose: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    /// Straightforward reference Lloyd implementation, written independently
    /// from the doc-comment recipe. Returns centroids after `iters` rounds.
    fn reference_lloyd(points: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Vec<f32> {
        let n = points.len() / dim;
        let pt = |i: usize| &points[i * dim..(i + 1) * dim];
        let sqd = |a: &[f32], b: &[f32]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| (x as f64 - y as f64) * (x as f64 - y as f64))
                .sum()
        };
        let mut rng = stream_rng(seed, 0);
        let mut cents: Vec<Vec<f32>> = Vec::new();
        cents.push(pt(uniform_index(&mut rng, n)).to_vec());
        let mut mind: Vec<f64> = (0..n).map(|i| sqd(pt(i), &cents[0])).collect();
        while cents.len() < k {
            let total: f64 = mind.iter().sum();
            let mut chosen = 0;
            if total > 0.0 {
                let u = uniform_halfopen01(&mut rng) * total;
                let mut cum = 0.0;
                for (i, &w) in mind.iter().enumerate() {
                    cum += w;
                    if cum > u {
                        chosen = i;
                        break;
                    }
                }
            }
            let c = pt(chosen).to_vec();
            for i in 0..n {
                let d = sqd(pt(i), &c);
                if d < mind[i] {
                    mind[i] = d;
                }
            }
            cents.push(c);
        }
        let mut prev = f64::INFINITY;
        for _ in 0..iters {
            let mut assign = vec![0usize; n];
            let mut dist_of = vec![0.0f64; n];
            let mut distortion = 0.0;
            for i in 0..n {
                let mut best = 0;
                let mut bd = f64::INFINITY;
                for (c, cent) in cents.iter().enumerate() {
                    let d = sqd(pt(i), cent);
                    if d < bd {
                        bd = d;
                        best = c;
                    }
                }
                assign[i] = best;
                dist_of[i] = bd;
                distortion += bd;
            }
            distortion /= n as f64;
            let mut sums = vec![vec![0.0f64; dim]; k];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[assign[i]] += 1;
                for j in 0..dim {
                    sums[assign[i]][j] += pt(i)[j] as f64;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for j in 0..dim {
                        cents[c][j] = (sums[c][j] / counts[c] as f64) as f32;
                    }
                }
            }
            let mut order: Vec<(f64, usize)> = dist_of.iter().copied().zip(0..n).collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
            for (e, &(_, i)) in empties.iter().zip(order.iter()) {
                cents[*e] = pt(i).to_vec();
            }
            if prev.is_finite() {
                let rel = if prev > 0.0 { (prev - distortion) / prev } else { 0.0 };
                if rel < RELATIVE_DISTORTION_EPSILON {
                    break;
                }
            }
            prev = distortion;
        }
        cents.into_iter().flatten().collect()
    }

    #[test]
    fn matches_reference_implementation() {
        let points = gaussian_points(1000, 8, 23);
        let km = train_kmeans(&points, 8, 16, 25, 7).unwrap();
        let reference = reference_lloyd(&points, 8, 16, 25, 7);
        assert_eq!(km.centroids_flat(), &reference[..]);
    }

    #[test]
    fn deterministic_across_runs() {
        let points = gaussian_points(500, 4, 31);
        let a = train_kmeans(&points, 4, 8, 25, 99).unwrap();
        let b = train_kmeans(&points, 4, 8, 25, 99).unwrap();
        assert_eq!(a.centroids_flat(), b.centroids_flat());
        let c = train_kmeans(&points, 4, 8, 25, 100).unwrap();
        assert_ne!(a.centroids_flat(), c.centroids_flat());
    }

    #[test]
    fn rejects_bad_input() {
        let points = gaussian_points(4, 4, 1);
        assert!(matches!(
            train_kmeans(&points, 4, 5, 25, 0),
            Err(Error::TooFewPoints { n: 4, k: 5 })
        ));
        let mut bad = gaussian_points(8, 4, 1);
        bad[3] = f32::INFINITY;
        assert!(matches!(
            train_kmeans(&bad, 4, 2, 25, 0),
            Err(Error::NonFinite(_))
        ));
    }
}
