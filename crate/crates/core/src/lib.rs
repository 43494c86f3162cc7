//! Choice-leakage membership inference for subset-trained ML pipelines.
//!
//! A selector keeps a fraction of a collected pool for training. Those
//! choices leak: by replaying a selector (or a clustering proxy for it) over
//! many overlapping windows of the query set, an auditor can tell which
//! samples were kept for training and which ones took part in selection at
//! all. This crate simulates that supply chain, runs both attack modes and
//! the usual baselines, and evaluates them with ROC metrics.

pub mod attack_black;
pub mod attack_side;
pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod io;
pub mod kmeans;
pub mod pipeline;
pub mod seed;
pub mod selectors;
pub mod windows;

pub use config::{AttackMode, RunConfig};
pub use data::{Dataset, GroundTruth, Sample, Surface, SurfaceLabels, Tag};
pub use error::{Error, Result};
pub use eval::RocReport;
pub use evidence::{EvidenceLedger, ScoreMode, ScoreTable};
pub use selectors::{SelectorKind, SelectorSpec};
pub use windows::WindowPlan;
