//! Side-channel choice leakage: the adversary knows the selector and its
//! ratio, replays it on every window, and scores samples by how stably they
//! get picked.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{EvidenceLedger, ScoreMode, ScoreTable};
use crate::selectors::{self, SelectorSpec};
use crate::windows::WindowPlan;

pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Evidence bits for one window, aligned with `window`.
pub fn evidence_side(
    dataset: &Dataset,
    window: &[usize],
    selector: &SelectorSpec,
    r: f64,
) -> Result<Vec<bool>> {
    if window.is_empty() {
        return Err(Error::input("window is empty"));
    }
    let chosen = selectors::select(selector, dataset, window, r)?;
    Ok(window
        .iter()
        .map(|id| chosen.binary_search(id).is_ok())
        .collect())
}

/// Sums per-window evidence into inclusion counts. `bits[i]` must be aligned
/// with `plan.window(i)`.
pub fn accumulate_counts(plan: &WindowPlan, bits: &[Vec<bool>]) -> Result<EvidenceLedger> {
    accumulate(plan, bits, None)
}

pub(crate) fn accumulate(
    plan: &WindowPlan,
    bits: &[Vec<bool>],
    distances: Option<&[Vec<f64>]>,
) -> Result<EvidenceLedger> {
    if bits.len() != plan.num_windows() {
        return Err(Error::integrity(format!(
            "got evidence for {} windows, plan has {}",
            bits.len(),
            plan.num_windows()
        )));
    }
    if let Some(d) = distances {
        if d.len() != bits.len() {
            return Err(Error::integrity("distance records do not match evidence windows"));
        }
    }
    let ids = plan.sorted_ids();
    let mut t = vec![0u32; ids.len()];
    let mut dist_sum = vec![0.0f64; ids.len()];
    for (i, window_bits) in bits.iter().enumerate() {
        if window_bits.len() != plan.window_size() {
            return Err(Error::integrity(format!(
                "window {i} has {} evidence bits, expected {}",
                window_bits.len(),
                plan.window_size()
            )));
        }
        let window_dist = match distances {
            Some(d) if d[i].len() != window_bits.len() => {
                return Err(Error::integrity(format!("window {i} distance record is misaligned")));
            }
            Some(d) => Some(&d[i]),
            None => None,
        };
        for (j, id) in plan.window(i).into_iter().enumerate() {
            if !window_bits[j] {
                continue;
            }
            let pos = ids
                .binary_search(&id)
                .map_err(|_| Error::integrity(format!("window {i} holds unknown id {id}")))?;
            t[pos] += 1;
            if let Some(d) = window_dist {
                dist_sum[pos] += d[j];
            }
        }
    }
    let n = plan.exposure() as u32;
    if let Some(pos) = t.iter().position(|&c| c > n) {
        return Err(Error::integrity(format!(
            "id {} counted {} times with exposure {n}",
            ids[pos], t[pos]
        )));
    }
    Ok(EvidenceLedger {
        ids,
        t,
        n,
        dist_sum,
    })
}

/// Replays the selector on every window of the plan (in parallel) and
/// aggregates the inclusion counts.
pub fn run_side_channel(
    dataset: &Dataset,
    plan: &WindowPlan,
    selector: &SelectorSpec,
    r: f64,
) -> Result<EvidenceLedger> {
    let bits = (0..plan.num_windows())
        .into_par_iter()
        .map(|i| evidence_side(dataset, &plan.window(i), selector, r))
        .collect::<Result<Vec<_>>>()?;
    accumulate_counts(plan, &bits)
}

/// `sigmoid(t - n/2)`.
pub fn score_side(t: u32, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("exposure n must be >= 1"));
    }
    if t > n {
        return Err(Error::input(format!("inclusion count {t} exceeds exposure {n}")));
    }
    Ok(sigmoid(t as f64 - n as f64 / 2.0))
}

/// `sigmoid(kappa * (t - r n))`. The normalizer depends only on `(n, r)`
/// and is dropped; it cannot change the ranking within a run.
pub fn score_side_general(t: u32, n: u32, r: f64, kappa: f64) -> Result<f64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::input(format!("kappa must be > 0, got {kappa}")));
    }
    selectors::check_ratio(r)?;
    if n == 0 {
        return Err(Error::input("exposure n must be >= 1"));
    }
    if t > n {
        return Err(Error::input(format!("inclusion count {t} exceeds exposure {n}")));
    }
    Ok(sigmoid(kappa * (t as f64 - r * n as f64)))
}

/// Scores every ledger entry. `general = None` uses the simplified
/// `sigmoid(t - n/2)` weight; `Some((r, kappa))` uses the centred form.
pub fn score_ledger_side(ledger: &EvidenceLedger, general: Option<(f64, f64)>) -> Result<ScoreTable> {
    let (mode, scores) = match general {
        None => (
            ScoreMode::Side,
            ledger
                .t
                .iter()
                .map(|&t| score_side(t, ledger.n))
                .collect::<Result<Vec<_>>>()?,
        ),
        Some((r, kappa)) => (
            ScoreMode::SideGeneral,
            ledger
                .t
                .iter()
                .map(|&t| score_side_general(t, ledger.n, r, kappa))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(ScoreTable::new(mode, &ledger.ids, &scores))
}

/// Member prediction `s >= tau`, in table order.
pub fn decide(scores: &ScoreTable, tau: f64) -> Vec<bool> {
    scores.rows.iter().map(|r| r.score >= tau).collect()
}
