//! ROC sweep, AUC and TPR at fixed FPR for the membership surfaces.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{surface_labels, GroundTruth, Surface, SurfaceLabels};
use crate::error::{Error, Result};
use crate::evidence::ScoreTable;

/// One operating point: predicting "member" for `score >= threshold` gives
/// this `(fpr, tpr)`. The first point uses an infinite threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

impl Serialize for RocPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let thr = self.threshold.is_finite().then_some(self.threshold);
        (self.fpr, self.tpr, thr).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RocPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (fpr, tpr, thr) = <(f64, f64, Option<f64>)>::deserialize(d)?;
        Ok(RocPoint {
            fpr,
            tpr,
            threshold: thr.unwrap_or(f64::INFINITY),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub surface: Surface,
    pub auc: f64,
    pub n_members: usize,
    pub n_nonmembers: usize,
    /// Keyed by the FPR level as written (e.g. "0.05").
    pub tpr_at: BTreeMap<String, f64>,
    pub curve: Vec<RocPoint>,
}

impl RocReport {
    pub fn tpr_at_level(&self, level: f64) -> Result<f64> {
        tpr_at_fpr(&self.curve, level)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Plot data, CSV `fpr,tpr`.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.curve {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}

pub fn level_key(level: f64) -> String {
    level.to_string()
}

/// Sorted-sweep ROC over raw scores (`true` = member).
///
/// Tied scores form one step of the curve, which gives them half credit in
/// the trapezoid area. The area is accumulated in integer half-pair units,
/// so the returned AUC is exactly the Mann-Whitney statistic.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("scores contain NaN"));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::input(format!(
            "ROC needs both classes; got {positives} members and {negatives} nonmembers"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp_before, fp_before) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp_before) as u128 * (tp_before + tp) as u128;
        curve.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        });
    }
    let auc = area2 as f64 / (2 * positives as u128 * negatives as u128) as f64;
    Ok((curve, auc))
}

pub fn roc_auc_raw(scores: &[f64], labels: &[bool]) -> Result<f64> {
    roc_curve(scores, labels).map(|(_, auc)| auc)
}

pub fn check_fpr_level(level: f64) -> Result<()> {
    if level.is_finite() && level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("FPR level must lie in (0, 1), got {level}")))
    }
}

/// TPR at the largest achievable FPR not above `level` (no interpolation).
pub fn tpr_at_fpr(curve: &[RocPoint], level: f64) -> Result<f64> {
    check_fpr_level(level)?;
    Ok(curve
        .iter()
        .filter(|p| p.fpr <= level)
        .map(|p| p.tpr)
        .fold(0.0, f64::max))
}

/// Aligns the score table with the labelled ids and builds the report.
pub fn roc_auc(scores: &ScoreTable, labels: &SurfaceLabels, fpr_levels: &[f64]) -> Result<RocReport> {
    for &level in fpr_levels {
        check_fpr_level(level)?;
    }
    let mut missing = Vec::new();
    let mut aligned = Vec::with_capacity(labels.ids.len());
    for &id in &labels.ids {
        match scores.get(id) {
            Some(s) => aligned.push(s),
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(20).map(|id| id.to_string()).collect();
        return Err(Error::input(format!(
            "score table is missing {} labelled ids: {}{}",
            missing.len(),
            shown.join(","),
            if missing.len() > 20 { ",..." } else { "" }
        )));
    }
    let n_members = labels.n_members();
    let n_nonmembers = labels.n_nonmembers();
    if n_members == 0 || n_nonmembers == 0 {
        return Err(Error::input(format!(
            "surface {} has {n_members} members and {n_nonmembers} nonmembers; need both",
            labels.surface
        )));
    }
    let (curve, auc) = roc_curve(&aligned, &labels.labels)?;
    let mut tpr_at = BTreeMap::new();
    for &level in fpr_levels {
        tpr_at.insert(level_key(level), tpr_at_fpr(&curve, level)?);
    }
    Ok(RocReport {
        surface: labels.surface,
        auc,
        n_members,
        n_nonmembers,
        tpr_at,
        curve,
    })
}

/// One report per requested surface.
pub fn assemble_report(
    scores: &ScoreTable,
    gt: &GroundTruth,
    surfaces: &[Surface],
    fpr_levels: &[f64],
) -> Result<Vec<RocReport>> {
    surfaces
        .iter()
        .map(|&surface| roc_auc(scores, &surface_labels(gt, surface), fpr_levels))
        .collect()
}

/// Plain-text table: one row per report, AUC plus one column per level.
pub fn format_table(reports: &[RocReport], fpr_levels: &[f64]) -> String {
    let mut out = format!("{:<8}{:>10}", "surface", "AUC");
    for &level in fpr_levels {
        out.push_str(&format!("{:>16}", format!("TPR@{}%FPR", level * 100.0)));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<8}{:>10.4}", r.surface.as_str(), r.auc));
        for &level in fpr_levels {
            let v = r.tpr_at.get(&level_key(level)).copied().unwrap_or(f64::NAN);
            out.push_str(&format!("{v:>16.4}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Tag;
    use crate::evidence::ScoreMode;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut half_units, mut p, mut n) = (0u128, 0u128, 0u128);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                p += 1;
            } else {
                n += 1;
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                if scores[i] > scores[j] {
                    half_units += 2;
                } else if scores[i] == scores[j] {
                    half_units += 1;
                }
            }
        }
        half_units as f64 / (2 * p * n) as f64
    }

    fn brute_tpr(scores: &[f64], labels: &[bool], level: f64) -> f64 {
        let p = labels.iter().filter(|&&l| l).count() as f64;
        let n = labels.len() as f64 - p;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.push(f64::INFINITY);
        thresholds
            .iter()
            .filter_map(|&t| {
                let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
                let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
                (fp / n <= level).then_some(tp / p)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn perfect_and_tied() {
        let labels = [true, true, false, false];
        assert_eq!(roc_auc_raw(&[1.0, 1.0, 0.0, 0.0], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc_raw(&[0.3; 4], &labels).unwrap(), 0.5);
        let (curve, _) = roc_curve(&[1.0, 1.0, 0.0, 0.0], &labels).unwrap();
        assert_eq!(tpr_at_fpr(&curve, 0.05).unwrap(), 1.0);
    }

    #[test]
    fn four_sample_exhaustive() {
        let labels = [true, false, true, false];
        let mut perm = [0.1, 0.2, 0.3, 0.4];
        // All 24 orderings of distinct scores.
        fn permute(k: usize, v: &mut [f64; 4], labels: &[bool; 4], f: &dyn Fn(&[f64], &[bool]) -> f64) {
            if k == v.len() {
                assert_eq!(roc_auc_raw(v, labels).unwrap(), f(v, labels));
                return;
            }
            for i in k..v.len() {
                v.swap(k, i);
                permute(k + 1, v, labels, f);
                v.swap(k, i);
            }
        }
        permute(0, &mut perm, &labels, &pairwise_auc);
    }

    #[test]
    fn curve_shape() {
        let scores = [0.9, 0.8, 0.8, 0.1, 0.5];
        let labels = [true, false, true, false, false];
        let (curve, auc) = roc_curve(&scores, &labels).unwrap();
        assert_eq!((curve[0].fpr, curve[0].tpr), (0.0, 0.0));
        let last = curve.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(curve.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        assert_eq!(auc, pairwise_auc(&scores, &labels));
    }

    #[test]
    fn step_convention_below_first_fpr() {
        // The top score is a nonmember, so no threshold reaches TPR > 0 at FPR 0.
        let scores = [0.9, 0.5, 0.4];
        let labels = [false, true, false];
        let (curve, _) = roc_curve(&scores, &labels).unwrap();
        assert_eq!(tpr_at_fpr(&curve, 0.1).unwrap(), 0.0);
        assert_eq!(tpr_at_fpr(&curve, 0.5).unwrap(), 1.0);
        assert!(tpr_at_fpr(&curve, 0.0).is_err());
        assert!(tpr_at_fpr(&curve, 1.0).is_err());
    }

    #[test]
    fn twenty_sample_tpr_matches_threshold_scan() {
        let mut rng = seed::rng(20);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..20).map(|_| rng.random_range(0..8) as f64).collect();
            let mut labels: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let (curve, _) = roc_curve(&scores, &labels).unwrap();
            for level in [0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
                assert_eq!(tpr_at_fpr(&curve, level).unwrap(), brute_tpr(&scores, &labels, level));
            }
        }
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(roc_auc_raw(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc_raw(&[0.1, f64::NAN], &[true, false]).is_err());
        assert!(roc_auc_raw(&[0.1], &[true, false]).is_err());
    }

    fn gt() -> GroundTruth {
        GroundTruth::from_dense(vec![
            Tag::Included,
            Tag::Excluded,
            Tag::Outside,
            Tag::Included,
            Tag::Outside,
        ])
    }

    #[test]
    fn report_bundle() {
        let table = ScoreTable::new(ScoreMode::Side, &[0, 1, 2, 3, 4], &[0.9, 0.6, 0.1, 0.8, 0.3]);
        let reports = assemble_report(&table, &gt(), &Surface::ALL, &[0.05]).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].surface, Surface::Tm);
        assert!(reports[0].n_members <= reports[1].n_members);
        assert_eq!(reports[1].auc, 1.0);
        assert_eq!(reports[0].tpr_at.keys().collect::<Vec<_>>(), vec!["0.05"]);

        let bare = assemble_report(&table, &gt(), &[Surface::Sp], &[]).unwrap();
        assert!(bare[0].tpr_at.is_empty());
        assert!(!bare[0].curve.is_empty());
    }

    #[test]
    fn report_errors() {
        let partial = ScoreTable::new(ScoreMode::Side, &[0, 1, 2], &[0.9, 0.6, 0.1]);
        let err = assemble_report(&partial, &gt(), &[Surface::Tm], &[]).unwrap_err().to_string();
        assert!(err.contains("3,4"), "{err}");
        let outside_only = GroundTruth::from_dense(vec![Tag::Outside; 3]);
        let table = ScoreTable::new(ScoreMode::Side, &[0, 1, 2], &[0.1, 0.2, 0.3]);
        let err = assemble_report(&table, &outside_only, &[Surface::Sp], &[]).unwrap_err().to_string();
        assert!(err.contains("SP"), "{err}");
    }

    #[test]
    fn report_json_schema() {
        let table = ScoreTable::new(ScoreMode::Side, &[0, 1, 2, 3, 4], &[0.9, 0.6, 0.1, 0.8, 0.3]);
        let report = &assemble_report(&table, &gt(), &[Surface::Tm], &[0.05, 0.1]).unwrap()[0];
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(v["surface"], "TM");
        assert!(v["auc"].is_number());
        assert_eq!(v["n_members"], 2);
        assert_eq!(v["n_nonmembers"], 3);
        assert!(v["tpr_at"]["0.05"].is_number());
        assert_eq!(v["curve"][0], serde_json::json!([0.0, 0.0, null]));
        let back: RocReport = serde_json::from_value(v).unwrap();
        assert_eq!(&back, report);
        assert!(report.curve_csv().starts_with("fpr,tpr\n0,0\n"));
    }

    proptest! {
        #[test]
        fn sweep_equals_pairwise(
            data in prop::collection::vec((0i32..12, any::<bool>()), 2..120),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 3.0).collect();
            let mut labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            labels[0] = true;
            labels[1] = false;
            prop_assert_eq!(roc_auc_raw(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
        }

        #[test]
        fn negation_complements(
            data in prop::collection::vec((-50i32..50, any::<bool>()), 2..80),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
            let mut labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            labels[0] = true;
            labels[1] = false;
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let a = roc_auc_raw(&scores, &labels).unwrap();
            let b = roc_auc_raw(&neg, &labels).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariant(
            data in prop::collection::vec((-40i32..40, any::<bool>()), 2..80),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 8.0).collect();
            let mut labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            labels[0] = true;
            labels[1] = false;
            let base = roc_auc_raw(&scores, &labels).unwrap();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
            prop_assert_eq!(roc_auc_raw(&exp, &labels).unwrap(), base);
            prop_assert_eq!(roc_auc_raw(&affine, &labels).unwrap(), base);
        }
    }
}
