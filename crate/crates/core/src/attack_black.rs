//! Black-box choice leakage. Without any selection metadata the adversary
//! clusters each window in embedding space and treats samples that sit
//! close to their centroid (at or below the window's median distance) as
//! representatives a selector would likely keep.

use rayon::prelude::*;

use crate::attack_side::{accumulate, score_side};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{EvidenceLedger, ScoreMode, ScoreTable};
use crate::kmeans::{kmeans, KMeansParams};
use crate::seed;
use crate::windows::WindowPlan;

/// Guards the division when a sample sits exactly on its centroids.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// Lower median: the `ceil(len / 2)`-th smallest value.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[values.len().div_ceil(2) - 1])
}

/// Bit per value: at or below the lower median.
pub fn median_evidence(distances: &[f64]) -> Vec<bool> {
    match lower_median(distances) {
        Some(m) => distances.iter().map(|&d| d <= m).collect(),
        None => Vec::new(),
    }
}

/// Clusters one window (row-major `points`, aligned with the window ids)
/// and returns each sample's evidence bit and assigned-centroid distance.
pub fn evidence_black(
    points: &[f64],
    dim: usize,
    params: KMeansParams,
) -> Result<(Vec<bool>, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::input("window is empty"));
    }
    let clusters = kmeans(points, dim, params)?;
    let bits = median_evidence(&clusters.distances);
    Ok((bits, clusters.distances))
}

/// Sums bits into `t(x)` and the distances of positive-evidence windows
/// into `dist_sum(x)`. `records[i]` must be aligned with `plan.window(i)`.
pub fn aggregate_black(
    plan: &WindowPlan,
    records: &[(Vec<bool>, Vec<f64>)],
) -> Result<EvidenceLedger> {
    let (bits, distances): (Vec<Vec<bool>>, Vec<Vec<f64>>) = records.iter().cloned().unzip();
    accumulate(plan, &bits, Some(&distances))
}

/// Per-window clustering seed.
pub fn window_seed(base: u64, window_index: usize) -> u64 {
    seed::derive(base, window_index as u64)
}

/// Clusters every window of the plan (in parallel) and aggregates evidence.
/// `params.seed` is the base seed; window `i` uses `window_seed(seed, i)`.
pub fn run_black_box(
    dataset: &Dataset,
    plan: &WindowPlan,
    params: KMeansParams,
) -> Result<EvidenceLedger> {
    let records = (0..plan.num_windows())
        .into_par_iter()
        .map(|i| {
            let points = dataset.feature_rows(&plan.window(i));
            evidence_black(
                &points,
                dataset.dim(),
                KMeansParams {
                    seed: window_seed(params.seed, i),
                    ..params
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_black(plan, &records)
}

/// `w(t; n) / d_bar`, with 0 for samples that never had positive evidence.
pub fn score_black(t: u32, n: u32, mean_distance: f64) -> Result<f64> {
    if mean_distance.is_nan() || mean_distance < 0.0 {
        return Err(Error::input(format!(
            "mean distance must be >= 0, got {mean_distance}"
        )));
    }
    let w = score_side(t, n)?;
    if t == 0 {
        return Ok(0.0);
    }
    Ok(w / mean_distance.max(DISTANCE_FLOOR))
}

pub fn score_ledger_black(ledger: &EvidenceLedger) -> Result<ScoreTable> {
    let scores = (0..ledger.len())
        .map(|pos| {
            let d = ledger.mean_distance(pos).unwrap_or(0.0);
            score_black(ledger.t[pos], ledger.n, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::new(ScoreMode::Black, &ledger.ids, &scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_side::sigmoid;
    use crate::data::Sample;
    use crate::windows::build_window_plan;

    #[test]
    fn median_rule_examples() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(median_evidence(&[1.0, 2.0, 3.0, 4.0]), vec![true, true, false, false]);
        assert_eq!(median_evidence(&[2.5; 6]), vec![true; 6]);
        assert_eq!(
            median_evidence(&[5.0, 1.0, 4.0, 2.0, 3.0]),
            vec![false, true, false, true, true]
        );
    }

    #[test]
    fn mean_distance_over_included_windows() {
        let ledger = EvidenceLedger {
            ids: vec![0, 1],
            t: vec![2, 0],
            n: 2,
            dist_sum: vec![4.0, 0.0],
        };
        assert_eq!(ledger.mean_distance(0), Some(2.0));
        assert_eq!(ledger.mean_distance(1), None);
    }

    #[test]
    fn black_scores() {
        assert!((score_black(10, 10, 1.0).unwrap() - sigmoid(5.0)).abs() < 1e-15);
        assert!(score_black(6, 10, 0.5).unwrap() > score_black(6, 10, 0.7).unwrap());
        assert_eq!(score_black(0, 10, 0.0).unwrap(), 0.0);
        assert!(score_black(1, 10, 5.0).unwrap() > 0.0);
        assert_eq!(score_black(3, 10, 0.0).unwrap(), score_side(3, 10).unwrap() / 1e-12);
        assert!(score_black(3, 10, -1.0).is_err());
        assert!(score_black(11, 10, 1.0).is_err());
    }

    #[test]
    fn black_score_monotone() {
        for n in 1..=20u32 {
            for t in 1..=n {
                for d in [0.1, 0.5, 1.0, 3.0] {
                    let s = score_black(t, n, d).unwrap();
                    if t < n {
                        assert!(s < score_black(t + 1, n, d).unwrap());
                    }
                    assert!(s > score_black(t, n, d * 1.5).unwrap());
                }
            }
        }
    }

    #[test]
    fn aggregate_matches_window_recount() {
        let ds = Dataset::new(
            [0.0f32, 0.2, 5.0, 5.3, 9.0, 0.1]
                .iter()
                .enumerate()
                .map(|(id, &x)| Sample {
                    id,
                    features: vec![x, x * 0.5],
                    label: None,
                    model_score: None,
                })
                .collect(),
        )
        .unwrap();
        let plan = build_window_plan(&ds.ids(), 4, 2, None).unwrap();
        let params = KMeansParams {
            k: 2,
            seed: 3,
            max_iter: 50,
            tol: 0.0,
        };
        let ledger = run_black_box(&ds, &plan, params).unwrap();

        let mut t = vec![0u32; 6];
        let mut sums = vec![0.0; 6];
        for i in 0..plan.num_windows() {
            let window: Vec<usize> = (0..4).map(|j| (i * 2 + j) % 6).collect();
            let pts = ds.feature_rows(&window);
            let res = kmeans(&pts, 2, KMeansParams { seed: window_seed(3, i), ..params }).unwrap();
            let mut sorted = res.distances.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[1];
            for (j, &id) in window.iter().enumerate() {
                if res.distances[j] <= median {
                    t[id] += 1;
                    sums[id] += res.distances[j];
                }
            }
        }
        assert_eq!(ledger.t, t);
        assert_eq!(ledger.dist_sum, sums);
        assert_eq!(ledger.n, 2);
    }

    #[test]
    fn misaligned_records_are_rejected() {
        let plan = build_window_plan(&(0..6).collect::<Vec<_>>(), 4, 2, None).unwrap();
        let rec = (vec![true; 4], vec![0.0; 3]);
        assert!(aggregate_black(&plan, &[rec.clone(), rec.clone(), rec]).is_err());
    }
}
