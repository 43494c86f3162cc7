//! Subset selectors operating on feature vectors and model scores.
//!
//! Each selector returns the chosen ids in ascending order. Candidates are
//! canonicalised by id before any greedy step, so the chosen set never
//! depends on the order the caller lists them in, and every tie goes to the
//! lower id.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Random,
    /// Least-confidence ranking on `model_score` (see [`SelectorSpec::invert`]).
    TopScore,
    Herding,
    KCenter,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Random => "random",
            SelectorKind::TopScore => "top_score",
            SelectorKind::Herding => "herding",
            SelectorKind::KCenter => "k_center",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(SelectorKind::Random),
            "top_score" | "topscore" | "uncertainty" => Ok(SelectorKind::TopScore),
            "herding" => Ok(SelectorKind::Herding),
            "k_center" | "kcenter" => Ok(SelectorKind::KCenter),
            other => Err(Error::input(format!("unknown selector kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub kind: SelectorKind,
    /// Only consumed by [`SelectorKind::Random`].
    #[serde(default)]
    pub seed: u64,
    /// TopScore keeps the lowest scores by default; `invert` keeps the
    /// highest instead.
    #[serde(default)]
    pub invert: bool,
}

impl SelectorSpec {
    pub fn new(kind: SelectorKind) -> Self {
        Self {
            kind,
            seed: 0,
            invert: false,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            seed,
            ..Self::new(SelectorKind::Random)
        }
    }
}

/// Number of samples kept out of `n` at ratio `r`, rounding half to even.
///
/// `r * n` is snapped to the nearest half-integer when it lies within 1e-9
/// of one, so decimal ratios such as 0.7 x 5 count as an exact tie.
pub fn selection_count(n: usize, r: f64) -> usize {
    let x = r * n as f64;
    let floor = x.floor();
    let frac = x - floor;
    let base = floor as usize;
    let k = if (frac - 0.5).abs() < 1e-9 {
        if base % 2 == 0 {
            base
        } else {
            base + 1
        }
    } else if frac > 0.5 {
        base + 1
    } else {
        base
    };
    k.min(n)
}

pub fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("ratio must lie in (0, 1], got {r}")))
    }
}

/// Run the selector on `candidates` and keep `selection_count(|candidates|, r)` of them.
pub fn select(
    spec: &SelectorSpec,
    dataset: &Dataset,
    candidates: &[usize],
    r: f64,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::input("selector received no candidates"));
    }
    check_ratio(r)?;
    let k = selection_count(candidates.len(), r);
    match spec.kind {
        SelectorKind::Random => select_random(dataset, candidates, k, spec.seed),
        SelectorKind::TopScore => select_top_score(dataset, candidates, k, spec.invert),
        SelectorKind::Herding => select_herding(dataset, candidates, k),
        SelectorKind::KCenter => select_k_center(dataset, candidates, k),
    }
}

fn canonical(dataset: &Dataset, candidates: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::input(format!("candidate id {} listed twice", w[0])));
    }
    if let Some(&last) = ids.last() {
        if last >= dataset.len() {
            return Err(Error::input(format!("candidate id {last} is not in the dataset")));
        }
    }
    if k > ids.len() {
        return Err(Error::input(format!(
            "cannot select {k} of {} candidates",
            ids.len()
        )));
    }
    Ok(ids)
}

/// Uniform k-subset. The stream is keyed on the seed and the candidate id
/// set, so each distinct window gets fresh randomness while a replay of the
/// same window reproduces the same subset.
pub fn select_random(
    dataset: &Dataset,
    candidates: &[usize],
    k: usize,
    seed_value: u64,
) -> Result<Vec<usize>> {
    let mut ids = canonical(dataset, candidates, k)?;
    let key = ids
        .iter()
        .fold(seed::mix64(ids.len() as u64), |h, &id| seed::mix64(h ^ id as u64));
    let mut rng = seed::rng(seed::derive(seed_value, key));
    for i in 0..k {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(k);
    ids.sort_unstable();
    Ok(ids)
}

/// The `k` lowest-scored candidates (highest when `invert`), ties to lower id.
pub fn select_top_score(
    dataset: &Dataset,
    candidates: &[usize],
    k: usize,
    invert: bool,
) -> Result<Vec<usize>> {
    let ids = canonical(dataset, candidates, k)?;
    let mut keyed = Vec::with_capacity(ids.len());
    for id in ids {
        let score = dataset
            .sample(id)
            .model_score
            .ok_or_else(|| Error::input(format!("sample {id} has no model_score")))?;
        if score.is_nan() {
            return Err(Error::input(format!("sample {id} has a NaN model_score")));
        }
        keyed.push((score, id));
    }
    keyed.sort_by(|a, b| {
        let by_score = if invert {
            b.0.total_cmp(&a.0)
        } else {
            a.0.total_cmp(&b.0)
        };
        by_score.then(a.1.cmp(&b.1))
    });
    let mut out: Vec<usize> = keyed.into_iter().take(k).map(|(_, id)| id).collect();
    out.sort_unstable();
    Ok(out)
}

/// Greedy mean matching: each step adds the candidate that brings the
/// running mean of the chosen set closest to the candidate mean.
pub fn select_herding(dataset: &Dataset, candidates: &[usize], k: usize) -> Result<Vec<usize>> {
    let ids = canonical(dataset, candidates, k)?;
    let dim = dataset.dim();
    let rows = dataset.feature_rows(&ids);
    let n = ids.len();
    let mut mean = vec![0.0; dim];
    for row in rows.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut sum = vec![0.0; dim];
    let mut taken = vec![false; n];
    let mut target = vec![0.0; dim];
    for step in 0..k {
        // (sum + x) / (step + 1) is closest to mean iff x is closest to
        // (step + 1) * mean - sum.
        for ((t, m), s) in target.iter_mut().zip(&mean).zip(&sum) {
            *t = (step + 1) as f64 * m - s;
        }
        let mut best: Option<(f64, usize)> = None;
        for (pos, row) in rows.chunks_exact(dim).enumerate() {
            if taken[pos] {
                continue;
            }
            let d = sq_dist(row, &target);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, pos));
            }
        }
        let (_, pos) = best.expect("k <= number of candidates");
        taken[pos] = true;
        for (s, v) in sum.iter_mut().zip(&rows[pos * dim..(pos + 1) * dim]) {
            *s += v;
        }
    }
    Ok(ids
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| t)
        .map(|(&id, _)| id)
        .collect())
}

/// Greedy farthest-point k-center seeded at the candidate nearest the centroid.
pub fn select_k_center(dataset: &Dataset, candidates: &[usize], k: usize) -> Result<Vec<usize>> {
    let ids = canonical(dataset, candidates, k)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let dim = dataset.dim();
    let rows = dataset.feature_rows(&ids);
    let n = ids.len();
    let mut centroid = vec![0.0; dim];
    for row in rows.chunks_exact(dim) {
        for (c, v) in centroid.iter_mut().zip(row) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);

    let row = |pos: usize| &rows[pos * dim..(pos + 1) * dim];
    let mut first = 0;
    let mut first_d = f64::INFINITY;
    for pos in 0..n {
        let d = sq_dist(row(pos), &centroid);
        if d < first_d {
            first_d = d;
            first = pos;
        }
    }

    let mut taken = vec![false; n];
    let mut min_d = vec![f64::INFINITY; n];
    let mut latest = first;
    taken[first] = true;
    for _ in 1..k {
        let mut best: Option<(f64, usize)> = None;
        for pos in 0..n {
            if taken[pos] {
                continue;
            }
            min_d[pos] = min_d[pos].min(sq_dist(row(pos), row(latest)));
            if best.is_none_or(|(bd, _)| min_d[pos] > bd) {
                best = Some((min_d[pos], pos));
            }
        }
        let (_, pos) = best.expect("k <= number of candidates");
        taken[pos] = true;
        latest = pos;
    }
    Ok(ids
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| t)
        .map(|(&id, _)| id)
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
