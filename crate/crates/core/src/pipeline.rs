//! End-to-end orchestration: simulate the supply chain, attack, evaluate,
//! and sweep one axis at a time.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_black::{run_black_box, score_ledger_black};
use crate::attack_side::{run_side_channel, score_ledger_side};
use crate::baselines::{
    gaussian_lr_scores, loss_from_confidence, loss_scores, read_shadow_csv, synthesize_shadow_scores,
};
use crate::config::{AttackMode, DatasetSource, RunConfig};
use crate::data::{generate_synthetic, partition_supply_chain, Dataset, GroundTruth, Tag};
use crate::error::{Error, Result};
use crate::eval::{assemble_report, level_key, RocReport};
use crate::evidence::{EvidenceLedger, ScoreTable};
use crate::io;
use crate::seed;
use crate::windows::{build_window_plan, build_window_plan_truncated, WindowPlan};

#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: Dataset,
    pub pool: Vec<usize>,
    pub ground_truth: GroundTruth,
}

impl Simulation {
    pub fn counts(&self) -> TagCounts {
        TagCounts {
            included: self.ground_truth.count(Tag::Included),
            excluded: self.ground_truth.count(Tag::Excluded),
            outside: self.ground_truth.count(Tag::Outside),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounts {
    pub included: usize,
    pub excluded: usize,
    pub outside: usize,
}

/// Loads or generates the query set and returns it with the pool ids.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Vec<usize>)> {
    match &cfg.dataset {
        DatasetSource::Synthetic(params) => {
            let syn = generate_synthetic(cfg.seed, *params)?;
            let pool = syn.pool_ids();
            Ok((syn.dataset, pool))
        }
        DatasetSource::File(src) => {
            let dataset = io::read_dataset(&src.path)?;
            let n_pool = src.n_pool.unwrap_or(dataset.len());
            if n_pool == 0 || n_pool > dataset.len() {
                return Err(Error::input(format!(
                    "dataset.file.n_pool: {n_pool} is outside 1..={}",
                    dataset.len()
                )));
            }
            Ok((dataset, (0..n_pool).collect()))
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (dataset, pool) = load_dataset(cfg)?;
    let ground_truth = partition_supply_chain(&dataset, &pool, &cfg.selector, cfg.ratio)?;
    Ok(Simulation {
        dataset,
        pool,
        ground_truth,
    })
}

/// Window plan over the whole query set, plus ids dropped by truncation.
pub fn plan_for(cfg: &RunConfig, dataset: &Dataset) -> Result<(WindowPlan, Vec<usize>)> {
    let ids = dataset.ids();
    let w = &cfg.window;
    let shuffle_seed = cfg.shuffle_seed();
    if w.pad_to_multiple {
        build_window_plan_truncated(&ids, w.size, w.interval, shuffle_seed)
    } else {
        Ok((build_window_plan(&ids, w.size, w.interval, shuffle_seed)?, Vec::new()))
    }
}

#[derive(Clone, Debug)]
pub struct AttackOutput {
    pub scores: ScoreTable,
    pub ledger: Option<EvidenceLedger>,
    pub plan: Option<WindowPlan>,
    pub dropped: Vec<usize>,
}

pub fn attack(cfg: &RunConfig, dataset: &Dataset) -> Result<AttackOutput> {
    cfg.validate()?;
    match cfg.attack.mode {
        AttackMode::Side | AttackMode::Black => {
            let (plan, dropped) = plan_for(cfg, dataset)?;
            let (ledger, scores) = if cfg.attack.mode == AttackMode::Side {
                let ledger = run_side_channel(dataset, &plan, &cfg.selector, cfg.ratio)?;
                let general = cfg
                    .attack
                    .general_weight
                    .then_some((cfg.ratio, cfg.attack.kappa));
                let scores = score_ledger_side(&ledger, general)?;
                (ledger, scores)
            } else {
                let ledger = run_black_box(dataset, &plan, cfg.kmeans_params())?;
                let scores = score_ledger_black(&ledger)?;
                (ledger, scores)
            };
            Ok(AttackOutput {
                scores,
                ledger: Some(ledger),
                plan: Some(plan),
                dropped,
            })
        }
        AttackMode::Loss => {
            let confidences = confidences(dataset)?;
            let losses: Vec<f64> = confidences.values().map(|&s| loss_from_confidence(s)).collect();
            let ids: Vec<usize> = confidences.keys().copied().collect();
            Ok(AttackOutput {
                scores: loss_scores(&ids, &losses)?,
                ledger: None,
                plan: None,
                dropped: Vec::new(),
            })
        }
        AttackMode::Lira => {
            let targets = confidences(dataset)?;
            let shadows = match &cfg.attack.shadow_file {
                Some(path) => read_shadow_csv(path)?,
                None => synthesize_shadow_scores(
                    dataset,
                    cfg.attack.n_shadow,
                    SHADOW_MEMBER_GAP,
                    SHADOW_NOISE,
                    seed::derive(cfg.seed, 0x5348),
                )?,
            };
            Ok(AttackOutput {
                scores: gaussian_lr_scores(&targets, &shadows)?,
                ledger: None,
                plan: None,
                dropped: Vec::new(),
            })
        }
    }
}

pub const SHADOW_MEMBER_GAP: f64 = 0.05;
pub const SHADOW_NOISE: f64 = 0.1;

fn confidences(dataset: &Dataset) -> Result<BTreeMap<usize, f64>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            s.model_score
                .map(|v| (s.id, v as f64))
                .ok_or_else(|| Error::input(format!("sample {} has no model_score", s.id)))
        })
        .collect()
}

/// Evaluates only the scored ids when truncation dropped part of the order.
pub fn evaluate(cfg: &RunConfig, scores: &ScoreTable, gt: &GroundTruth) -> Result<Vec<RocReport>> {
    let gt = if cfg.window.pad_to_multiple && cfg.attack.mode.uses_windows() {
        gt.restrict(&scores.ids())
    } else {
        gt.clone()
    };
    let mut surfaces = cfg.surfaces.clone();
    surfaces.sort();
    surfaces.dedup();
    assemble_report(scores, &gt, &surfaces, &cfg.fpr_levels)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub simulation: Simulation,
    pub attack: AttackOutput,
    pub reports: Vec<RocReport>,
}

impl RunOutput {
    pub fn report(&self, surface: crate::data::Surface) -> Option<&RocReport> {
        self.reports.iter().find(|r| r.surface == surface)
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let cfg = cfg.resolved();
    let simulation = simulate(&cfg)?;
    let attack = attack(&cfg, &simulation.dataset)?;
    let reports = evaluate(&cfg, &attack.scores, &simulation.ground_truth)?;
    Ok(RunOutput {
        simulation,
        attack,
        reports,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Ratio,
    Interval,
    KClusters,
    Shift,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Ratio => "ratio",
            SweepAxis::Interval => "interval",
            SweepAxis::KClusters => "k_clusters",
            SweepAxis::Shift => "shift",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ratio" => Ok(SweepAxis::Ratio),
            "interval" => Ok(SweepAxis::Interval),
            "k_clusters" | "k" | "clusters" => Ok(SweepAxis::KClusters),
            "shift" => Ok(SweepAxis::Shift),
            other => Err(Error::input(format!(
                "unknown sweep axis '{other}' (expected ratio, interval, k_clusters or shift)"
            ))),
        }
    }
}

/// Copy of `base` with the axis set to `value`.
pub fn apply_axis(base: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    let as_count = |v: f64| -> Result<usize> {
        if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::input(format!("{axis} values must be positive integers, got {v}")))
        }
    };
    match axis {
        SweepAxis::Ratio => cfg.ratio = value,
        SweepAxis::Interval => {
            if !cfg.attack.mode.uses_windows() {
                return Err(Error::input(format!(
                    "axis interval needs a windowed mode, not {}",
                    cfg.attack.mode
                )));
            }
            cfg.window.interval = as_count(value)?;
        }
        SweepAxis::KClusters => {
            if cfg.attack.mode != AttackMode::Black {
                return Err(Error::input(format!(
                    "axis k_clusters needs mode black, not {}",
                    cfg.attack.mode
                )));
            }
            cfg.attack.k_clusters = as_count(value)?;
        }
        SweepAxis::Shift => match &mut cfg.dataset {
            DatasetSource::Synthetic(p) => p.shift = value,
            DatasetSource::File(_) => {
                return Err(Error::input("axis shift needs a synthetic dataset"));
            }
        },
    }
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub surface: crate::data::Surface,
    pub auc: f64,
    pub tpr_at: BTreeMap<String, f64>,
}

/// Runs one configuration per value (in parallel) sharing the base seed.
/// Rows are sorted by value, then surface.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::input("sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| apply_axis(base, axis, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    let per_value = configs
        .par_iter()
        .map(|(v, cfg)| {
            run(cfg).map(|out| {
                out.reports
                    .into_iter()
                    .map(|r| SweepRow {
                        value: *v,
                        surface: r.surface,
                        auc: r.auc,
                        tpr_at: r.tpr_at,
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SweepRow> = per_value.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.surface.cmp(&b.surface)));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], fpr_levels: &[f64]) -> String {
    let mut out = String::from("value,surface,auc");
    for &l in fpr_levels {
        out.push_str(&format!(",tpr@{}", level_key(l)));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", r.value, r.surface, r.auc));
        for &l in fpr_levels {
            let v = r.tpr_at.get(&level_key(l)).copied().unwrap_or(f64::NAN);
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
