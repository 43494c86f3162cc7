//! Dataset and ground-truth file formats.
//!
//! Text datasets are CSV with header `id,feat_0,...,feat_{d-1}[,label][,score]`.
//! Binary datasets are little-endian:
//!
//! ```text
//! b"CLEB" | version u32 = 1 | rows u64 | dim u32 | flags u32
//! rows x ( dim x f32 features | [i32 label] | [f32 score] )
//! ```
//!
//! with flag bit 0 = has_label and bit 1 = has_score.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, GroundTruth, Sample, Tag};
use crate::error::{Error, Result};
use crate::evidence::csv_error;

pub const MAGIC: &[u8; 4] = b"CLEB";
pub const VERSION: u32 = 1;
const FLAG_LABEL: u32 = 1;
const FLAG_SCORE: u32 = 2;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4;

fn optional_columns(dataset: &Dataset) -> Result<(bool, bool)> {
    let labels = dataset.samples().iter().filter(|s| s.label.is_some()).count();
    let scores = dataset.samples().iter().filter(|s| s.model_score.is_some()).count();
    let all_or_none = |count: usize, what: &str| {
        if count == 0 || count == dataset.len() {
            Ok(count > 0)
        } else {
            Err(Error::input(format!(
                "{what} present on {count} of {} samples; files need all or none",
                dataset.len()
            )))
        }
    };
    Ok((all_or_none(labels, "labels")?, all_or_none(scores, "scores")?))
}

pub fn encode_binary(dataset: &Dataset) -> Result<Vec<u8>> {
    let (has_label, has_score) = optional_columns(dataset)?;
    let dim = dataset.dim();
    let row_len = 4 * (dim + has_label as usize + has_score as usize);
    let mut buf = Vec::with_capacity(HEADER_LEN + row_len * dataset.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    let flags = if has_label { FLAG_LABEL } else { 0 } | if has_score { FLAG_SCORE } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for s in dataset.samples() {
        for v in &s.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(label) = s.label.filter(|_| has_label) {
            buf.extend_from_slice(&label.to_le_bytes());
        }
        if let Some(score) = s.model_score.filter(|_| has_score) {
            buf.extend_from_slice(&score.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let bad = |detail: &str| Error::format(path, detail);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic, expected CLEB"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32_at(16) as usize;
    let flags = u32_at(20);
    if flags & !(FLAG_LABEL | FLAG_SCORE) != 0 {
        return Err(Error::format(path, format!("unknown flag bits {flags:#x}")));
    }
    let has_label = flags & FLAG_LABEL != 0;
    let has_score = flags & FLAG_SCORE != 0;
    let row_len = 4 * (dim + has_label as usize + has_score as usize);
    let expected = rows
        .checked_mul(row_len)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("row count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for {rows}x{dim}, found {}", bytes.len()),
        ));
    }
    let mut samples = Vec::with_capacity(rows);
    for (id, row) in bytes[HEADER_LEN..].chunks_exact(row_len.max(1)).take(rows).enumerate() {
        let word = |i: usize| -> [u8; 4] { row[4 * i..4 * i + 4].try_into().unwrap() };
        let features = (0..dim).map(|i| f32::from_le_bytes(word(i))).collect();
        let mut next = dim;
        let label = has_label.then(|| {
            next += 1;
            i32::from_le_bytes(word(next - 1))
        });
        let model_score = has_score.then(|| f32::from_le_bytes(word(next)));
        samples.push(Sample {
            id,
            features,
            label,
            model_score,
        });
    }
    Dataset::new(samples).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_binary(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_binary(dataset)?).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes, path)
}

pub fn encode_csv(dataset: &Dataset) -> Result<String> {
    let (has_label, has_score) = optional_columns(dataset)?;
    let mut out = String::from("id");
    for j in 0..dataset.dim() {
        out.push_str(&format!(",feat_{j}"));
    }
    if has_label {
        out.push_str(",label");
    }
    if has_score {
        out.push_str(",score");
    }
    out.push('\n');
    for s in dataset.samples() {
        out.push_str(&s.id.to_string());
        for v in &s.features {
            out.push(',');
            out.push_str(&v.to_string());
        }
        if let Some(l) = s.label.filter(|_| has_label) {
            out.push_str(&format!(",{l}"));
        }
        if let Some(v) = s.model_score.filter(|_| has_score) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_csv(dataset)?).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"id") {
        return Err(Error::format(path, "first column must be 'id'"));
    }
    let mut dim = 0;
    while names.get(1 + dim) == Some(&format!("feat_{dim}").as_str()) {
        dim += 1;
    }
    let mut rest = names[1 + dim..].iter();
    let mut next = rest.next();
    let has_label = next == Some(&"label");
    if has_label {
        next = rest.next();
    }
    let has_score = next == Some(&"score");
    if has_score {
        next = rest.next();
    }
    if let Some(extra) = next {
        return Err(Error::format(path, format!("unexpected column '{extra}'")));
    }

    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let parse_err = |what: &str, value: &str| {
            Error::format(path, format!("row {}: bad {what} '{value}'", line + 1))
        };
        let id = field(0).parse::<usize>().map_err(|_| parse_err("id", field(0)))?;
        let features = (0..dim)
            .map(|j| field(1 + j).parse::<f32>().map_err(|_| parse_err("feature", field(1 + j))))
            .collect::<Result<Vec<_>>>()?;
        let mut col = 1 + dim;
        let label = if has_label {
            col += 1;
            Some(field(col - 1).parse::<i32>().map_err(|_| parse_err("label", field(col - 1)))?)
        } else {
            None
        };
        let model_score = if has_score {
            Some(field(col).parse::<f32>().map_err(|_| parse_err("score", field(col)))?)
        } else {
            None
        };
        samples.push(Sample {
            id,
            features,
            label,
            model_score,
        });
    }
    Dataset::new(samples).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads either format, choosing by the `.csv` extension.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path)
    } else {
        read_binary(path)
    }
}

pub fn ground_truth_csv(gt: &GroundTruth) -> String {
    let mut out = String::from("id,tag\n");
    for (id, tag) in gt.iter() {
        out.push_str(&format!("{id},{tag}\n"));
    }
    out
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    fs::write(path, ground_truth_csv(gt)).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let id = record
            .get(0)
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::format(path, format!("row {}: bad id", line + 1)))?;
        let tag: Tag = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| Error::format(path, format!("row {}: {e}", line + 1)))?;
        entries.push((id, tag));
    }
    GroundTruth::new(entries).map_err(|e| Error::format(path, e.to_string()))
}
