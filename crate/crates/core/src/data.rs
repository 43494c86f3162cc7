//! Datasets, the simulated supply-chain partition and surface labels.
//!
//! Every sample of the query set carries one [`Tag`]: it was either selected
//! for training (`Included`), seen by the selector and discarded
//! (`Excluded`), or never collected (`Outside`). The two membership surfaces
//! read those tags differently, see [`Surface`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::selectors::{self, SelectorSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f32>,
    pub label: Option<i32>,
    /// Confidence proxy, higher means the model is more certain.
    pub model_score: Option<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    /// Validates dimension consistency and dense `0..N` ids.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::input(format!(
                "dataset needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(Error::input("feature dimension must be at least 1"));
        }
        for (pos, s) in samples.iter().enumerate() {
            if s.id != pos {
                return Err(Error::input(format!(
                    "sample ids must be dense 0..N-1 in order; position {pos} has id {}",
                    s.id
                )));
            }
            if s.features.len() != dim {
                return Err(Error::input(format!(
                    "sample {} has dimension {}, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, id: usize) -> &Sample {
        &self.samples[id]
    }

    pub fn get(&self, id: usize) -> Option<&Sample> {
        self.samples.get(id)
    }

    pub fn ids(&self) -> Vec<usize> {
        (0..self.samples.len()).collect()
    }

    pub fn has_labels(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    pub fn has_scores(&self) -> bool {
        self.samples.iter().all(|s| s.model_score.is_some())
    }

    /// Row-major feature matrix in f64 for the given ids.
    pub fn feature_rows(&self, ids: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            out.extend(self.samples[id].features.iter().map(|&v| v as f64));
        }
        out
    }
}

/// Parameters of the synthetic generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_pool: usize,
    pub n_outside: usize,
    pub dim: usize,
    /// Translation of every mixture component for the outside samples.
    pub shift: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_pool: 2000,
            n_outside: 1000,
            dim: 8,
            shift: 0.0,
        }
    }
}

/// Synthetic query set. Ids `0..n_pool` form the selection pool, the rest
/// are outside samples.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub n_pool: usize,
    pub component_means: Vec<Vec<f64>>,
}

impl Synthetic {
    pub fn pool_ids(&self) -> Vec<usize> {
        (0..self.n_pool).collect()
    }
}

const MEAN_SPREAD: f64 = 3.0;
const SCORE_NOISE: f64 = 0.1;

pub fn mixture_components(dim: usize) -> usize {
    dim.clamp(2, 10)
}

/// Draws a unit-variance Gaussian mixture query set.
///
/// Component `j` of sample `i` is `i mod k`, so pool and outside have the
/// same balanced composition. Each part of the generator draws from its own
/// seeded stream, which keeps the pool fixed when only the outside
/// parameters change.
pub fn generate_synthetic(seed: u64, params: SyntheticParams) -> Result<Synthetic> {
    let SyntheticParams {
        n_pool,
        n_outside,
        dim,
        shift,
    } = params;
    if n_pool < 2 {
        return Err(Error::input(format!("n_pool must be >= 2, got {n_pool}")));
    }
    if dim < 1 {
        return Err(Error::input("dim must be >= 1"));
    }
    if !(shift.is_finite() && shift >= 0.0) {
        return Err(Error::input(format!("shift must be finite and >= 0, got {shift}")));
    }

    let k = mixture_components(dim);
    let mut mean_rng = seed::rng(seed::derive(seed, 0));
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..dim)
                .map(|_| MEAN_SPREAD * mean_rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let direction = 1.0 / (dim as f64).sqrt();

    let draw = |rng: &mut rand_chacha::ChaCha8Rng, i: usize, offset: f64| -> Vec<f64> {
        means[i % k]
            .iter()
            .map(|&m| m + offset + rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut rows = Vec::with_capacity(n_pool + n_outside);
    let mut pool_rng = seed::rng(seed::derive(seed, 1));
    for i in 0..n_pool {
        rows.push((draw(&mut pool_rng, i, 0.0), i % k));
    }
    let mut outside_rng = seed::rng(seed::derive(seed, 2));
    for j in 0..n_outside {
        rows.push((draw(&mut outside_rng, j, shift * direction), j % k));
    }

    let mut noise_rng = seed::rng(seed::derive(seed, 3));
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(id, (x, component))| {
            let nearest = means
                .iter()
                .map(|m| euclidean(&x, m))
                .fold(f64::INFINITY, f64::min);
            let noise: f64 = noise_rng.sample::<f64, _>(StandardNormal) * SCORE_NOISE;
            Sample {
                id,
                features: x.iter().map(|&v| v as f32).collect(),
                label: Some(component as i32),
                model_score: Some((-nearest + noise) as f32),
            }
        })
        .collect();

    Ok(Synthetic {
        dataset: Dataset::new(samples)?,
        n_pool,
        component_means: means,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Included,
    Excluded,
    Outside,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Included => "included",
            Tag::Excluded => "excluded",
            Tag::Outside => "outside",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "included" | "inc" | "i" => Ok(Tag::Included),
            "excluded" | "exc" | "e" => Ok(Tag::Excluded),
            "outside" | "out" | "o" => Ok(Tag::Outside),
            other => Err(Error::input(format!("unknown tag '{other}'"))),
        }
    }
}

/// Per-sample tags, sorted by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    ids: Vec<usize>,
    tags: Vec<Tag>,
}

impl GroundTruth {
    pub fn new(mut entries: Vec<(usize, Tag)>) -> Result<Self> {
        entries.sort_by_key(|&(id, _)| id);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::input(format!("duplicate id {} in ground truth", w[0].0)));
        }
        let (ids, tags) = entries.into_iter().unzip();
        Ok(Self { ids, tags })
    }

    /// Tags for dense ids `0..tags.len()`.
    pub fn from_dense(tags: Vec<Tag>) -> Self {
        Self {
            ids: (0..tags.len()).collect(),
            tags,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Tag)> + '_ {
        self.ids.iter().copied().zip(self.tags.iter().copied())
    }

    pub fn tag(&self, id: usize) -> Option<Tag> {
        self.ids.binary_search(&id).ok().map(|pos| self.tags[pos])
    }

    pub fn with_tag(&self, tag: Tag) -> Vec<usize> {
        self.iter().filter(|&(_, t)| t == tag).map(|(id, _)| id).collect()
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Keep only the given ids; ids without a tag are ignored.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        let (ids, tags) = self.iter().filter(|(id, _)| keep.contains(id)).unzip();
        Self { ids, tags }
    }
}

/// Partition the pool with the selector: selected ids become `Included`,
/// the rest of the pool `Excluded`, and every other dataset id `Outside`.
pub fn partition_supply_chain(
    dataset: &Dataset,
    pool: &[usize],
    selector: &SelectorSpec,
    ratio: f64,
) -> Result<GroundTruth> {
    if pool.is_empty() {
        return Err(Error::input("selection pool is empty"));
    }
    if let Some(&bad) = pool.iter().find(|&&id| id >= dataset.len()) {
        return Err(Error::input(format!("pool id {bad} is not in the dataset")));
    }
    let included: BTreeSet<usize> = selectors::select(selector, dataset, pool, ratio)?
        .into_iter()
        .collect();
    let pool: BTreeSet<usize> = pool.iter().copied().collect();
    let tags = (0..dataset.len())
        .map(|id| {
            if included.contains(&id) {
                Tag::Included
            } else if pool.contains(&id) {
                Tag::Excluded
            } else {
                Tag::Outside
            }
        })
        .collect();
    Ok(GroundTruth::from_dense(tags))
}

/// Membership surface. Training membership counts only `Included`;
/// selection participation counts the whole pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Surface {
    #[serde(rename = "TM", alias = "tm")]
    Tm,
    #[serde(rename = "SP", alias = "sp")]
    Sp,
}

impl Surface {
    pub const ALL: [Surface; 2] = [Surface::Tm, Surface::Sp];

    pub fn is_member(self, tag: Tag) -> bool {
        match self {
            Surface::Tm => tag == Tag::Included,
            Surface::Sp => matches!(tag, Tag::Included | Tag::Excluded),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Surface::Tm => "TM",
            Surface::Sp => "SP",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Surface::Tm => "tm",
            Surface::Sp => "sp",
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Surface {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tm" => Ok(Surface::Tm),
            "sp" => Ok(Surface::Sp),
            other => Err(Error::input(format!("unknown surface '{other}' (expected tm or sp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceLabels {
    pub surface: Surface,
    pub ids: Vec<usize>,
    pub labels: Vec<bool>,
}

impl SurfaceLabels {
    pub fn n_members(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }

    pub fn n_nonmembers(&self) -> usize {
        self.labels.len() - self.n_members()
    }
}

pub fn surface_labels(gt: &GroundTruth, surface: Surface) -> SurfaceLabels {
    SurfaceLabels {
        surface,
        ids: gt.ids().to_vec(),
        labels: gt.tags().iter().map(|&t| surface.is_member(t)).collect(),
    }
}
