//! Reference membership attacks: the loss attack and a two-Gaussian
//! likelihood-ratio attack over shadow-model scores.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{csv_error, ScoreMode, ScoreTable};
use crate::seed;

pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Lower loss means more member-like, so the score is the negated loss.
pub fn attack_loss(loss: f64) -> Result<f64> {
    if !loss.is_finite() {
        return Err(Error::input(format!("loss must be finite, got {loss}")));
    }
    Ok(-loss)
}

pub fn loss_scores(ids: &[usize], losses: &[f64]) -> Result<ScoreTable> {
    let scores = losses
        .iter()
        .map(|&l| attack_loss(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::new(ScoreMode::Baseline, ids, &scores))
}

/// Cross-entropy style loss proxy for a confidence score: `ln(1 + e^-s)`.
pub fn loss_from_confidence(score: f64) -> f64 {
    if score > 0.0 {
        (-score).exp().ln_1p()
    } else {
        -score + score.exp().ln_1p()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShadowScores {
    pub member_scores: Vec<f64>,
    pub nonmember_scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub var: f64,
}

impl GaussianFit {
    /// Sample mean and unbiased variance, floored at [`VARIANCE_FLOOR`].
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::input(format!(
                "need at least 2 shadow scores to fit a Gaussian, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("shadow scores must be finite"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            var: var.max(VARIANCE_FLOOR),
        })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - (x - self.mean).powi(2) / (2.0 * self.var)
    }
}

/// `log N(target | member fit) - log N(target | nonmember fit)`.
pub fn attack_gaussian_lr(target: f64, shadow: &ShadowScores) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::input("target score must be finite"));
    }
    let member = GaussianFit::fit(&shadow.member_scores)?;
    let nonmember = GaussianFit::fit(&shadow.nonmember_scores)?;
    Ok(member.log_density(target) - nonmember.log_density(target))
}

/// Likelihood-ratio scores for every id that has both a target score and
/// shadow scores.
pub fn gaussian_lr_scores(
    targets: &BTreeMap<usize, f64>,
    shadows: &BTreeMap<usize, ShadowScores>,
) -> Result<ScoreTable> {
    let mut ids = Vec::with_capacity(targets.len());
    let mut scores = Vec::with_capacity(targets.len());
    for (&id, &target) in targets {
        let shadow = shadows
            .get(&id)
            .ok_or_else(|| Error::input(format!("no shadow scores for id {id}")))?;
        ids.push(id);
        scores.push(attack_gaussian_lr(target, shadow)?);
    }
    Ok(ScoreTable::new(ScoreMode::Baseline, &ids, &scores))
}

#[derive(Debug, Serialize, Deserialize)]
struct ShadowRow {
    id: usize,
    score: f64,
    side: String,
}

/// Reads CSV `id,score,side` with `side` in {member, nonmember}.
pub fn read_shadow_csv(path: &Path) -> Result<BTreeMap<usize, ShadowScores>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out: BTreeMap<usize, ShadowScores> = BTreeMap::new();
    for row in reader.deserialize::<ShadowRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let entry = out.entry(row.id).or_default();
        match row.side.trim() {
            "member" => entry.member_scores.push(row.score),
            "nonmember" => entry.nonmember_scores.push(row.score),
            other => {
                return Err(Error::format(
                    path,
                    format!("side must be member or nonmember, got '{other}'"),
                ))
            }
        }
    }
    Ok(out)
}

pub fn write_shadow_csv(path: &Path, shadows: &BTreeMap<usize, ShadowScores>) -> Result<()> {
    let mut text = String::from("id,score,side\n");
    for (id, s) in shadows {
        for v in &s.member_scores {
            text.push_str(&format!("{id},{v},member\n"));
        }
        for v in &s.nonmember_scores {
            text.push_str(&format!("{id},{v},nonmember\n"));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Stand-in shadow scores for demos: half of `n_shadow` draws around the
/// target's own confidence plus `member_gap`, half around the confidence
/// itself, each with Gaussian noise `noise`.
pub fn synthesize_shadow_scores(
    dataset: &Dataset,
    n_shadow: usize,
    member_gap: f64,
    noise: f64,
    seed_value: u64,
) -> Result<BTreeMap<usize, ShadowScores>> {
    if n_shadow < 4 {
        return Err(Error::input("need at least 4 shadow models (2 per side)"));
    }
    let mut rng = seed::rng(seed::derive(seed_value, 0x5348_4144));
    let mut out = BTreeMap::new();
    for s in dataset.samples() {
        let base = s
            .model_score
            .ok_or_else(|| Error::input(format!("sample {} has no model_score", s.id)))?
            as f64;
        let mut draw = |offset: f64| base + offset + noise * rng.sample::<f64, _>(StandardNormal);
        let half = n_shadow / 2;
        let member_scores = (0..half).map(|_| draw(member_gap)).collect();
        let nonmember_scores = (0..n_shadow - half).map(|_| draw(0.0)).collect();
        out.insert(
            s.id,
            ShadowScores {
                member_scores,
                nonmember_scores,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_auc_raw;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn loss_attack_examples() {
        assert_eq!(attack_loss(0.0).unwrap(), 0.0);
        assert_eq!(attack_loss(0.1).unwrap(), -0.1);
        assert_eq!(attack_loss(2.0).unwrap(), -2.0);
        assert!(attack_loss(f64::NAN).is_err());
        assert!(attack_loss(f64::INFINITY).is_err());
    }

    #[test]
    fn loss_attack_separates_disjoint_losses() {
        let mut rng = seed::rng(9);
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let member = i % 2 == 0;
            let loss: f64 = if member {
                rng.random_range(0.0..1.0)
            } else {
                rng.random_range(1.0..2.0)
            };
            scores.push(attack_loss(loss).unwrap());
            labels.push(member);
        }
        assert_eq!(roc_auc_raw(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn loss_proxy_is_softplus() {
        for s in [-30.0, -1.0, 0.0, 0.5, 40.0] {
            let direct = (1.0 + (-s as f64).exp()).ln();
            assert!((loss_from_confidence(s) - direct).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn symmetric_fits_give_zero() {
        let shadow = ShadowScores {
            member_scores: vec![0.1, 0.4, 0.9],
            nonmember_scores: vec![0.1, 0.4, 0.9],
        };
        for t in [-3.0, 0.0, 0.4, 7.0] {
            assert_eq!(attack_gaussian_lr(t, &shadow).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_variance_example() {
        // Sample mean 1 / 0 and unbiased variance 1 on both sides.
        let shadow = ShadowScores {
            member_scores: vec![0.0, 2.0],
            nonmember_scores: vec![-1.0, 1.0],
        };
        let fit = GaussianFit::fit(&shadow.member_scores).unwrap();
        assert_eq!((fit.mean, fit.var), (1.0, 2.0));
        let shadow = ShadowScores {
            member_scores: vec![1.0 - 0.5f64.sqrt(), 1.0 + 0.5f64.sqrt()],
            nonmember_scores: vec![-(0.5f64.sqrt()), 0.5f64.sqrt()],
        };
        assert!((attack_gaussian_lr(1.0, &shadow).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wider_member_fit_dominates_far_tail() {
        let shadow = ShadowScores {
            member_scores: vec![-2.0, 0.0, 2.0],
            nonmember_scores: vec![-0.5, 0.0, 0.5],
        };
        assert!(attack_gaussian_lr(6.0, &shadow).unwrap() > 0.0);
    }

    #[test]
    fn too_few_shadow_scores() {
        let shadow = ShadowScores {
            member_scores: vec![1.0],
            nonmember_scores: vec![0.0, 1.0],
        };
        assert!(attack_gaussian_lr(0.0, &shadow).is_err());
    }

    #[test]
    fn degenerate_variance_is_floored() {
        let shadow = ShadowScores {
            member_scores: vec![1.0, 1.0],
            nonmember_scores: vec![0.0, 2.0],
        };
        assert!(attack_gaussian_lr(1.0, &shadow).unwrap().is_finite());
    }

    #[test]
    fn shadow_csv_round_trip() {
        let ds = crate::data::generate_synthetic(1, crate::data::SyntheticParams {
            n_pool: 5,
            n_outside: 2,
            dim: 2,
            shift: 0.0,
        })
        .unwrap()
        .dataset;
        let shadows = synthesize_shadow_scores(&ds, 8, 0.1, 0.05, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shadow.csv");
        write_shadow_csv(&path, &shadows).unwrap();
        assert_eq!(read_shadow_csv(&path).unwrap(), shadows);
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "id,score,side\n0,1.0,maybe\n").unwrap();
        assert!(read_shadow_csv(&bad).is_err());
    }

    proptest! {
        #[test]
        fn loss_ranking_reverses(losses in prop::collection::vec(0.0f64..10.0, 2..30)) {
            let scores: Vec<f64> = losses.iter().map(|&l| attack_loss(l).unwrap()).collect();
            for i in 0..losses.len() {
                for j in 0..losses.len() {
                    prop_assert_eq!(losses[i] < losses[j], scores[i] > scores[j]);
                }
            }
        }

        #[test]
        fn llr_shift_invariant(
            mem in prop::collection::vec(-5.0f64..5.0, 2..10),
            non in prop::collection::vec(-5.0f64..5.0, 2..10),
            target in -6.0f64..6.0,
            c in -50.0f64..50.0,
        ) {
            let base = attack_gaussian_lr(target, &ShadowScores { member_scores: mem.clone(), nonmember_scores: non.clone() }).unwrap();
            let moved = ShadowScores {
                member_scores: mem.iter().map(|v| v + c).collect(),
                nonmember_scores: non.iter().map(|v| v + c).collect(),
            };
            let shifted = attack_gaussian_lr(target + c, &moved).unwrap();
            // Compare relative to magnitude when a floored variance blows the LLR up.
            prop_assert!((base - shifted).abs() <= 1e-9 * base.abs().max(1.0));
        }
    }
}
