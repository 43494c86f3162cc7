//! Subcommand implementations for the `choiceleak` binary.
//!
//! Every command resolves a [`RunConfig`] (flag > config file > default),
//! reads and writes plain files under the output directory, and records
//! what it used in `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use choiceleak::config::{AttackMode, DatasetSource, RunConfig};
use choiceleak::data::{Surface, Tag};
use choiceleak::eval::{format_table, RocReport};
use choiceleak::evidence::{ScoreMode, ScoreTable};
use choiceleak::pipeline::{self, SweepAxis};
use choiceleak::selectors::SelectorKind;
use choiceleak::{io, Error};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub const DATASET_BIN: &str = "dataset.bin";
pub const DATASET_CSV: &str = "dataset.csv";
pub const GROUND_TRUTH: &str = "groundtruth.csv";
pub const MANIFEST: &str = "manifest.json";
pub const SCORES_CSV: &str = "scores.csv";
pub const SCORES_JSON: &str = "scores.json";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const PLAN_JSON: &str = "plan.json";

#[derive(Debug, Parser)]
#[command(name = "choiceleak", version, about = "Choice-leakage membership inference audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or load the query set and partition it with the selector.
    Simulate(CommonArgs),
    /// Score every sample with the configured attack.
    Attack(CommonArgs),
    /// Compute ROC reports for the requested surfaces.
    Eval(CommonArgs),
    /// Rerun the whole pipeline across values of one axis.
    Sweep(SweepArgs),
    /// Print the table of existing report files.
    Report(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// side, black, loss or lira.
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated surfaces, e.g. tm,sp.
    #[arg(long)]
    pub surface: Option<String>,
    /// Comma-separated FPR levels, e.g. 0.01,0.05.
    #[arg(long)]
    pub fpr: Option<String>,
    /// Selection ratio r.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// random, top_score, herding or k_center.
    #[arg(long)]
    pub selector: Option<String>,
    /// Keep the highest scores with the top_score selector.
    #[arg(long)]
    pub invert: bool,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub interval: Option<usize>,
    /// Truncate the ordering to the largest multiple of the interval.
    /// Samples past the cut get no score and are left out of evaluation.
    #[arg(long)]
    pub pad_to_multiple: bool,
    #[arg(long)]
    pub k_clusters: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Outside-pool mean shift for the synthetic generator.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Use an external dataset (.bin or .csv) instead of the generator.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// With --dataset: the first N rows form the selection pool.
    #[arg(long)]
    pub n_pool: Option<usize>,
    /// Shadow score CSV `id,score,side` for the lira mode.
    #[arg(long)]
    pub shadow: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// ratio, interval, k_clusters or shift.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values or an inclusive integer range like 2..10.
    #[arg(long)]
    pub values: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 0 ok, 1 runtime failure, 2 invalid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_user_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_list<T>(text: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(s.trim()).ok_or_else(|| usage(format!("invalid {what} '{s}'"))))
        .collect()
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(args: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.attack.mode = mode.parse::<AttackMode>().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(s) = &args.surface {
        cfg.surfaces = parse_list(s, "surface", |v| v.parse::<Surface>().ok())?;
    }
    if let Some(f) = &args.fpr {
        cfg.fpr_levels = parse_list(f, "FPR level", |v| v.parse::<f64>().ok())?;
    }
    if let Some(r) = args.ratio {
        cfg.ratio = r;
    }
    if let Some(kind) = &args.selector {
        cfg.selector.kind = kind.parse::<SelectorKind>().map_err(|e| usage(e.to_string()))?;
    }
    if args.invert {
        cfg.selector.invert = true;
    }
    if let Some(w) = args.window {
        cfg.window.size = w;
    }
    if let Some(i) = args.interval {
        cfg.window.interval = i;
    }
    if args.pad_to_multiple {
        cfg.window.pad_to_multiple = true;
    }
    if let Some(k) = args.k_clusters {
        cfg.attack.k_clusters = k;
    }
    if let Some(kappa) = args.kappa {
        cfg.attack.kappa = kappa;
    }
    if let Some(shift) = args.shift {
        match &mut cfg.dataset {
            DatasetSource::Synthetic(p) => p.shift = shift,
            DatasetSource::File(_) => return Err(usage("--shift needs a synthetic dataset")),
        }
    }
    if let Some(path) = &args.dataset {
        cfg.dataset = DatasetSource::File(choiceleak::config::FileSource {
            path: path.clone(),
            n_pool: args.n_pool,
        });
    } else if args.n_pool.is_some() {
        return Err(usage("--n-pool needs --dataset"));
    }
    if let Some(path) = &args.shadow {
        cfg.attack.shadow_file = Some(path.clone());
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Merges `entry` under `stage` in the output directory's manifest.
fn record_manifest(dir: &Path, stage: &str, entry: Value) -> CliResult<()> {
    let path = dir.join(MANIFEST);
    let mut manifest = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str::<Value>(&text).map_err(Error::from)?,
        Err(_) => json!({}),
    };
    if !manifest.is_object() {
        manifest = json!({});
    }
    manifest[stage] = entry;
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
    write(&path, text)
}

pub fn cmd_simulate(args: &CommonArgs) -> CliResult<String> {
    let cfg = resolve_config(args)?;
    let sim = pipeline::simulate(&cfg)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    io::write_binary(&sim.dataset, &dir.join(DATASET_BIN))?;
    io::write_csv(&sim.dataset, &dir.join(DATASET_CSV))?;
    io::write_ground_truth(&sim.ground_truth, &dir.join(GROUND_TRUTH))?;
    let counts = sim.counts();
    record_manifest(
        dir,
        "simulate",
        json!({
            "config": cfg,
            "n_samples": sim.dataset.len(),
            "dim": sim.dataset.dim(),
            "n_pool": sim.pool.len(),
            "counts": counts,
        }),
    )?;
    Ok(format!(
        "simulated {} samples (included {}, excluded {}, outside {}) into {}\n",
        sim.dataset.len(),
        counts.included,
        counts.excluded,
        counts.outside,
        dir.display()
    ))
}

/// The dataset an attack runs on: an external file when configured,
/// otherwise the one `simulate` wrote.
fn attack_dataset(cfg: &RunConfig) -> CliResult<choiceleak::Dataset> {
    match &cfg.dataset {
        DatasetSource::File(src) => Ok(io::read_dataset(&src.path)?),
        DatasetSource::Synthetic(_) => {
            let path = cfg.output_dir.join(DATASET_BIN);
            if !path.exists() {
                return Err(usage(format!(
                    "{} not found; run `choiceleak simulate` first",
                    path.display()
                )));
            }
            Ok(io::read_binary(&path)?)
        }
    }
}

pub fn cmd_attack(args: &CommonArgs) -> CliResult<String> {
    let cfg = resolve_config(args)?;
    let dataset = attack_dataset(&cfg)?;
    let out = pipeline::attack(&cfg, &dataset)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    out.scores.write_csv(&dir.join(SCORES_CSV))?;
    out.scores.write_json(&dir.join(SCORES_JSON))?;
    if let Some(ledger) = &out.ledger {
        write(
            &dir.join(LEDGER_CSV),
            ledger.to_csv(cfg.attack.mode == AttackMode::Black),
        )?;
    }
    let plan = out.plan.as_ref().map(|p| p.summary());
    if let Some(summary) = &plan {
        let text = serde_json::to_string_pretty(summary).map_err(Error::from)? + "\n";
        write(&dir.join(PLAN_JSON), text)?;
    }
    record_manifest(
        dir,
        "attack",
        json!({
            "config": cfg,
            "plan": plan,
            "dropped_ids": out.dropped,
            "n_scored": out.scores.len(),
        }),
    )?;
    let mut msg = format!(
        "{} attack scored {} samples into {}\n",
        cfg.attack.mode,
        out.scores.len(),
        dir.join(SCORES_CSV).display()
    );
    if !out.dropped.is_empty() {
        msg.push_str(&format!(
            "warning: pad-to-multiple dropped {} samples from the window ordering\n",
            out.dropped.len()
        ));
    }
    Ok(msg)
}

fn score_mode(mode: AttackMode) -> ScoreMode {
    match mode {
        AttackMode::Side => ScoreMode::Side,
        AttackMode::Black => ScoreMode::Black,
        AttackMode::Loss | AttackMode::Lira => ScoreMode::Baseline,
    }
}

pub fn cmd_eval(args: &CommonArgs) -> CliResult<String> {
    let cfg = resolve_config(args)?;
    let dir = &cfg.output_dir;
    let gt = io::read_ground_truth(&dir.join(GROUND_TRUTH))?;
    let scores = ScoreTable::read_csv(&dir.join(SCORES_CSV), score_mode(cfg.attack.mode))?;
    for &surface in &cfg.surfaces {
        let members = gt.iter().filter(|&(_, t)| surface.is_member(t)).count();
        if members == 0 {
            return Err(usage(format!("surface {surface} has no members in {}", GROUND_TRUTH)));
        }
    }
    let reports = pipeline::evaluate(&cfg, &scores, &gt)?;
    for r in &reports {
        let stem = r.surface.file_stem();
        r.write_json(&dir.join(format!("report_{stem}.json")))?;
        write(&dir.join(format!("roc_{stem}.csv")), r.curve_csv())?;
    }
    record_manifest(
        dir,
        "eval",
        json!({
            "config": cfg,
            "n_included": gt.count(Tag::Included),
            "n_excluded": gt.count(Tag::Excluded),
            "n_outside": gt.count(Tag::Outside),
        }),
    )?;
    Ok(format_table(&reports, &cfg.fpr_levels))
}

/// Comma list, or an inclusive integer range `a..b`.
pub fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| usage(format!("bad range start in '{text}'")))?;
        let b: i64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| usage(format!("bad range end in '{text}'")))?;
        if a > b {
            return Err(usage(format!("empty range '{text}'")));
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    let values = parse_list(text, "sweep value", |v| v.parse::<f64>().ok())?;
    if values.is_empty() {
        return Err(usage("--values is empty"));
    }
    Ok(values)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<String> {
    let cfg = resolve_config(&args.common)?;
    let axis: SweepAxis = args.axis.parse().map_err(|e: Error| usage(e.to_string()))?;
    let values = parse_values(&args.values)?;
    let rows = pipeline::sweep(&cfg, axis, &values)?;
    let csv = pipeline::sweep_csv(&rows, &cfg.fpr_levels);
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write(&dir.join(format!("sweep_{axis}.csv")), &csv)?;
    record_manifest(
        dir,
        &format!("sweep_{axis}"),
        json!({ "config": cfg, "axis": axis, "values": values }),
    )?;
    Ok(csv)
}

pub fn cmd_report(args: &CommonArgs) -> CliResult<String> {
    let cfg = resolve_config(args)?;
    let mut reports = Vec::new();
    for surface in Surface::ALL {
        let path = cfg.output_dir.join(format!("report_{}.json", surface.file_stem()));
        if path.exists() {
            reports.push(RocReport::read_json(&path)?);
        }
    }
    if reports.is_empty() {
        return Err(usage(format!(
            "no report_*.json in {}; run `choiceleak eval` first",
            cfg.output_dir.display()
        )));
    }
    let mut levels: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.tpr_at.keys().filter_map(|k| k.parse::<f64>().ok()))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(format_table(&reports, &levels))
}

pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}
