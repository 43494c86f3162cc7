//! Run configuration. Stored as JSON; every optional field resolves to a
//! concrete value before a run so the manifest records what was used.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Surface, SyntheticParams};
use crate::error::{Error, Result};
use crate::eval::check_fpr_level;
use crate::kmeans::KMeansParams;
use crate::seed;
use crate::selectors::{check_ratio, SelectorKind, SelectorSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticParams),
    File(FileSource),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileSource {
    pub path: PathBuf,
    /// The first `n_pool` rows form the selection pool; all rows when absent.
    #[serde(default)]
    pub n_pool: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub size: usize,
    pub interval: usize,
    /// Shuffle the adversary's ordering before windowing.
    pub shuffle: bool,
    /// Defaults to the run seed.
    pub shuffle_seed: Option<u64>,
    /// Truncate the ordering to the largest multiple of `interval` instead
    /// of rejecting a non-divisible N.
    pub pad_to_multiple: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            size: 800,
            interval: 40,
            shuffle: true,
            shuffle_seed: None,
            pad_to_multiple: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    Side,
    Black,
    Loss,
    Lira,
}

impl AttackMode {
    pub fn uses_windows(self) -> bool {
        matches!(self, AttackMode::Side | AttackMode::Black)
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::Side => "side",
            AttackMode::Black => "black",
            AttackMode::Loss => "loss",
            AttackMode::Lira => "lira",
        })
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "side" => Ok(AttackMode::Side),
            "black" => Ok(AttackMode::Black),
            "loss" => Ok(AttackMode::Loss),
            "lira" => Ok(AttackMode::Lira),
            other => Err(Error::input(format!(
                "unknown attack mode '{other}' (expected side, black, loss or lira)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// Use `sigmoid(kappa (t - r n))` instead of `sigmoid(t - n/2)`.
    pub general_weight: bool,
    pub kappa: f64,
    pub k_clusters: usize,
    /// Defaults to a value derived from the run seed.
    pub kmeans_seed: Option<u64>,
    pub max_iter: usize,
    pub tol: f64,
    /// CSV `id,score,side` for the likelihood-ratio baseline; synthesized
    /// from the dataset when absent.
    pub shadow_file: Option<PathBuf>,
    pub n_shadow: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            mode: AttackMode::Side,
            general_weight: false,
            kappa: 1.0,
            k_clusters: 5,
            kmeans_seed: None,
            max_iter: 100,
            tol: 1e-6,
            shadow_file: None,
            n_shadow: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    pub selector: SelectorSpec,
    pub ratio: f64,
    pub window: WindowConfig,
    pub attack: AttackConfig,
    pub surfaces: Vec<Surface>,
    pub fpr_levels: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSource::Synthetic(SyntheticParams::default()),
            selector: SelectorSpec::new(SelectorKind::TopScore),
            ratio: 0.4,
            window: WindowConfig::default(),
            attack: AttackConfig::default(),
            surfaces: Surface::ALL.to_vec(),
            fpr_levels: vec![0.05],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Field-level validation; the first offending field is named.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::input(format!("{name}: {e}"));
        match &self.dataset {
            DatasetSource::Synthetic(p) => {
                if p.n_pool < 2 {
                    return Err(Error::input("dataset.synthetic.n_pool: must be >= 2"));
                }
                if p.dim < 1 {
                    return Err(Error::input("dataset.synthetic.dim: must be >= 1"));
                }
                if !(p.shift.is_finite() && p.shift >= 0.0) {
                    return Err(Error::input("dataset.synthetic.shift: must be finite and >= 0"));
                }
            }
            DatasetSource::File(f) => {
                if !f.path.exists() {
                    return Err(Error::input(format!(
                        "dataset.file.path: {} does not exist",
                        f.path.display()
                    )));
                }
                if f.n_pool == Some(0) {
                    return Err(Error::input("dataset.file.n_pool: must be >= 1"));
                }
            }
        }
        check_ratio(self.ratio).map_err(|e| field("ratio", e))?;
        if self.window.interval == 0 {
            return Err(Error::input("window.interval: must be >= 1"));
        }
        if self.window.size == 0 || self.window.size % self.window.interval != 0 {
            return Err(Error::input(format!(
                "window.size: must be a positive multiple of window.interval ({})",
                self.window.interval
            )));
        }
        if !(self.attack.kappa.is_finite() && self.attack.kappa > 0.0) {
            return Err(Error::input("attack.kappa: must be > 0"));
        }
        if self.attack.k_clusters == 0 {
            return Err(Error::input("attack.k_clusters: must be >= 1"));
        }
        if self.attack.max_iter == 0 {
            return Err(Error::input("attack.max_iter: must be >= 1"));
        }
        if !(self.attack.tol.is_finite() && self.attack.tol >= 0.0) {
            return Err(Error::input("attack.tol: must be >= 0"));
        }
        if let Some(p) = &self.attack.shadow_file {
            if !p.exists() {
                return Err(Error::input(format!(
                    "attack.shadow_file: {} does not exist",
                    p.display()
                )));
            }
        }
        if self.surfaces.is_empty() {
            return Err(Error::input("surfaces: at least one of TM, SP is required"));
        }
        for &level in &self.fpr_levels {
            check_fpr_level(level).map_err(|e| field("fpr_levels", e))?;
        }
        Ok(())
    }

    /// Fills every seed-derived default with its concrete value.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if out.window.shuffle && out.window.shuffle_seed.is_none() {
            out.window.shuffle_seed = Some(seed::derive(self.seed, 0x0057_494e));
        }
        if !out.window.shuffle {
            out.window.shuffle_seed = None;
        }
        if out.attack.kmeans_seed.is_none() {
            out.attack.kmeans_seed = Some(seed::derive(self.seed, 0x004b_4d45));
        }
        let mut surfaces = out.surfaces.clone();
        surfaces.sort();
        surfaces.dedup();
        out.surfaces = surfaces;
        out
    }

    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.attack.k_clusters,
            seed: self
                .attack
                .kmeans_seed
                .unwrap_or_else(|| seed::derive(self.seed, 0x004b_4d45)),
            max_iter: self.attack.max_iter,
            tol: self.attack.tol,
        }
    }

    pub fn shuffle_seed(&self) -> Option<u64> {
        self.resolved().window.shuffle_seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_use_five_clusters() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.attack.k_clusters, 5);
        assert_eq!(cfg.fpr_levels, vec![0.05]);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"seed": 3, "ratio": 0.2, "attack": {"mode": "black"},
                "selector": {"kind": "herding"}, "surfaces": ["tm"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.attack.mode, AttackMode::Black);
        assert_eq!(cfg.attack.k_clusters, 5);
        assert_eq!(cfg.selector.kind, SelectorKind::Herding);
        assert_eq!(cfg.surfaces, vec![Surface::Tm]);
        assert_eq!(cfg.window, WindowConfig::default());
    }

    #[test]
    fn unknown_mode_is_rejected() {
        assert!(RunConfig::from_json(r#"{"attack": {"mode": "grey"}}"#).is_err());
        assert!("grey".parse::<AttackMode>().is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = RunConfig::default();
        cfg.ratio = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("ratio"));
        let mut cfg = RunConfig::default();
        cfg.window.size = 50;
        assert!(cfg.validate().unwrap_err().to_string().contains("window.size"));
        let mut cfg = RunConfig::default();
        cfg.fpr_levels = vec![1.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("fpr_levels"));
        let mut cfg = RunConfig::default();
        cfg.dataset = DatasetSource::File(FileSource {
            path: "/definitely/not/here.bin".into(),
            n_pool: None,
        });
        assert!(cfg.validate().unwrap_err().to_string().contains("dataset.file.path"));
    }

    #[test]
    fn resolution_round_trips() {
        let resolved = RunConfig::default().resolved();
        assert!(resolved.window.shuffle_seed.is_some());
        assert!(resolved.attack.kmeans_seed.is_some());
        let back = RunConfig::from_json(&resolved.to_json().unwrap()).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.resolved(), resolved);
    }
}
