//! Per-sample evidence ledgers and score tables shared by both attack modes.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregated window evidence for every id of a plan, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceLedger {
    pub ids: Vec<usize>,
    /// Inclusion count `t(x)`.
    pub t: Vec<u32>,
    /// Exposure `n`, identical for every id.
    pub n: u32,
    /// Sum of assigned-centroid distances over windows with positive
    /// evidence. All zero for side-channel ledgers.
    pub dist_sum: Vec<f64>,
}

impl EvidenceLedger {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Mean distance over the windows where the sample had positive
    /// evidence; `None` when it never did.
    pub fn mean_distance(&self, pos: usize) -> Option<f64> {
        (self.t[pos] > 0).then(|| self.dist_sum[pos] / self.t[pos] as f64)
    }

    pub fn t_of(&self, id: usize) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|p| self.t[p])
    }

    /// CSV `id,t,n` or `id,t,n,dbar`; `dbar` is empty when `t = 0`.
    pub fn to_csv(&self, with_distance: bool) -> String {
        let mut out = String::from(if with_distance { "id,t,n,dbar\n" } else { "id,t,n\n" });
        for pos in 0..self.ids.len() {
            out.push_str(&format!("{},{},{}", self.ids[pos], self.t[pos], self.n));
            if with_distance {
                out.push(',');
                if let Some(d) = self.mean_distance(pos) {
                    out.push_str(&d.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Side,
    SideGeneral,
    Black,
    Baseline,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Side => "side",
            ScoreMode::SideGeneral => "side_general",
            ScoreMode::Black => "black",
            ScoreMode::Baseline => "baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: usize,
    pub score: f64,
}

/// Membership scores, higher means more member-like.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub mode: ScoreMode,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(mode: ScoreMode, ids: &[usize], scores: &[f64]) -> Self {
        let mut rows: Vec<ScoreRow> = ids
            .iter()
            .zip(scores)
            .map(|(&id, &score)| ScoreRow { id, score })
            .collect();
        rows.sort_by_key(|r| r.id);
        Self { mode, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<f64> {
        self.rows
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|p| self.rows[p].score)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.id).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,score\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.id, r.score));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Reads the `id,score` CSV form.
    pub fn read_csv(path: &Path, mode: ScoreMode) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for record in reader.deserialize::<ScoreRow>() {
            rows.push(record.map_err(|e| csv_error(path, e))?);
        }
        rows.sort_by_key(|r| r.id);
        if let Some(w) = rows.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::format(path, format!("duplicate id {}", w[0].id)));
        }
        Ok(Self { mode, rows })
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}
