//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Euclidean distance of each point to its assigned centroid.
    pub distances: Vec<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// Clusters the row-major `points` (`dim` columns).
///
/// Stops once no centroid moves by `tol` or more (or not at all when
/// `tol == 0`), or after `max_iter` Lloyd updates. A cluster that empties is
/// re-seeded at the point farthest from its own centroid.
pub fn kmeans(points: &[f64], dim: usize, params: KMeansParams) -> Result<ClusterResult> {
    let KMeansParams {
        k,
        seed: seed_value,
        max_iter,
        tol,
    } = params;
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::input("point matrix does not match its dimension"));
    }
    let n = points.len() / dim;
    if k == 0 {
        return Err(Error::input("k must be >= 1"));
    }
    if k > n {
        return Err(Error::input(format!("k = {k} exceeds the number of points ({n})")));
    }
    if max_iter == 0 {
        return Err(Error::input("max_iter must be >= 1"));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::input(format!("tol must be finite and >= 0, got {tol}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("points contain non-finite coordinates"));
    }

    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = plus_plus(points, dim, k, seed_value);
    let mut assignments = vec![0usize; n];
    let mut sq = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        assign(points, dim, &centroids, &mut assignments, &mut sq);
        reseed_empty(points, dim, &mut centroids, &mut assignments, &mut sq);
        history.push(sq.iter().sum::<f64>());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        iterations += 1;
        if shift < tol || shift == 0.0 {
            break;
        }
    }

    assign(points, dim, &centroids, &mut assignments, &mut sq);
    let inertia = sq.iter().sum::<f64>();
    history.push(inertia);
    Ok(ClusterResult {
        assignments,
        centroids,
        distances: sq.iter().map(|d| d.sqrt()).collect(),
        inertia,
        inertia_history: history,
        iterations,
    })
}

fn plus_plus(points: &[f64], dim: usize, k: usize, seed_value: u64) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = seed::rng(seed_value);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![row(first).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every point coincides with a centroid already.
            chosen.iter().position(|&c| !c).expect("k <= n")
        };
        chosen[next] = true;
        let c = row(next).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(
    points: &[f64],
    dim: usize,
    centroids: &[Vec<f64>],
    assignments: &mut [usize],
    sq: &mut [f64],
) {
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        sq[i] = best_d;
    }
}

fn reseed_empty(
    points: &[f64],
    dim: usize,
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
    sq: &mut [f64],
) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..assignments.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| sq[a].total_cmp(&sq[b]).then(b.cmp(&a)));
        let Some(i) = donor else { break };
        counts[assignments[i]] -= 1;
        counts[c] += 1;
        assignments[i] = c;
        sq[i] = 0.0;
        centroids[c] = points[i * dim..(i + 1) * dim].to_vec();
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
