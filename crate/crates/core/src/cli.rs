//! `fuse` command-line interface: `train`, `evaluate`, `predict` and
//! `extract-features`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, PipelineConfig};
use crate::evaluation::{confusion_csv, fmt_sig, group_report, mean_metrics, reports_csv, summary_json, EvalError, GroupReport, ScoredSample, DEFAULT_THRESHOLD};
use crate::manifest::{load_manifest, ManifestError, ManifestRecord, Split};
use crate::pipeline::{record_features, run_training, score_image, score_records, PipelineError};
use crate::semantic::{load_encoder, EncoderHandle, SemanticError, EMBEDDING_DIM};
use crate::spectral::ReductionMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const LOCK_FILE: &str = ".fuse.lock";

#[derive(Debug, Parser)]
#[command(name = "fuse", version, about = "Spectral + semantic detector for AI-generated images")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-stage training from the configured manifest.
    Train,
    /// Per-generator accuracy / AP of a checkpoint on a manifest.
    Evaluate(EvaluateArgs),
    /// Scores individual images.
    Predict(PredictArgs),
    /// Writes spectral and/or semantic features of a manifest as CSV.
    ExtractFeatures(ExtractArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupBy {
    Generator,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the configured test manifest, then the main manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "generator")]
    pub group_by: GroupBy,
    /// Comma-separated generator tags averaged into mAcc/mAP (default: all).
    #[arg(long, value_delimiter = ',')]
    pub include: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Defaults to the configured manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output CSV path; relative paths are placed in the output directory.
    #[arg(long, default_value = "features.csv")]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "semantic_only")]
    pub spectral_only: bool,
    #[arg(long)]
    pub semantic_only: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Data(_) => EXIT_DATA,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<SemanticError> for CliError {
    fn from(e: SemanticError) -> Self {
        match e {
            SemanticError::ModelNotFound(_) | SemanticError::SignatureMismatch(_) | SemanticError::BackendUnavailable(_) => {
                Self::Config(e.to_string())
            }
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::ConfigHashMismatch { .. } => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Config(_) => Self::Config(e.to_string()),
            _ if e.is_data_error() => Self::Data(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownTag(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Exclusive marker file in the output directory, removed on drop.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(LOCK_FILE);
        std::fs::OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::Runtime(format!("output directory {} is locked by another run ({LOCK_FILE} exists)", dir.display()))
            } else {
                io_err(&path, e)
            }
        })?;
        Ok(Self(path))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Loads the config file (or defaults) and applies CLI/env overrides.
fn live_config(cli: &Cli) -> Result<(PipelineConfig, bool), CliError> {
    let (mut cfg, from_file) = match &cli.config {
        Some(p) => (PipelineConfig::load(p)?, true),
        None => (PipelineConfig::default(), false),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.output {
        cfg.paths.output_dir = Some(out.clone());
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok((cfg, from_file))
}

fn output_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("manifest not found: {}", path.display())));
    }
    Ok(load_manifest(path)?)
}

/// Runs a parsed command line, writing user-facing output to `out`.
/// Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Train => cmd_train(&cli, out),
        Command::Evaluate(args) => cmd_evaluate(&cli, args, out),
        Command::Predict(args) => cmd_predict(&cli, args, out),
        Command::ExtractFeatures(args) => cmd_extract_features(&cli, args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fuse: {e}");
            e.exit_code()
        }
    }
}

fn write_eval_outputs(dir: &Path, prefix: &str, samples: &[ScoredSample], include: &[String]) -> Result<(Vec<GroupReport>, crate::evaluation::MeanMetrics), CliError> {
    let reports = group_report(samples, DEFAULT_THRESHOLD);
    let means = mean_metrics(&reports, include)?;
    write_file(&dir.join(format!("{prefix}evaluation.csv")), &reports_csv(&reports))?;
    write_file(&dir.join(format!("{prefix}confusion.csv")), &confusion_csv(&reports))?;
    write_file(&dir.join(format!("{prefix}summary.json")), &summary_json(&reports, include, &means))?;
    Ok((reports, means))
}

fn print_means(out: &mut dyn Write, label: &str, m: &crate::evaluation::MeanMetrics) {
    let map = m.map.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    let _ = writeln!(out, "{label}mAcc {:.2}  mAP {map}", m.macc);
}

pub fn cmd_train(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let (cfg, from_file) = live_config(cli)?;
    if !from_file {
        return Err(CliError::Config("train requires --config".into()));
    }
    let manifest = cfg.paths.manifest.clone().ok_or_else(|| CliError::Config("paths.manifest is not set".into()))?;
    let records = read_manifest(&manifest)?;
    let test: Vec<ManifestRecord> = match &cfg.paths.test_manifest {
        Some(p) => read_manifest(p)?,
        None => records.iter().filter(|r| r.split == Split::Test).cloned().collect(),
    };
    let encoder = load_encoder(&cfg.encoder)?;
    let dir = output_dir(&cfg);
    let _lock = OutputLock::acquire(&dir)?;

    let outcome = run_training(&records, &test, &cfg, &encoder)?;
    for (name, stage) in [("stage1", &outcome.stage1), ("stage2", &outcome.stage2)] {
        stage.checkpoint.save(&dir.join(format!("{name}.ckpt"))).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Some(scores) = &stage.test_scores {
            let (_, means) = write_eval_outputs(&dir, &format!("{name}_"), scores, &[])?;
            print_means(out, &format!("{name}: "), &means);
        }
    }
    write_file(&dir.join("train_report.csv"), &outcome.report.to_csv())?;
    let _ = writeln!(out, "wrote checkpoints and reports to {}", dir.display());
    Ok(EXIT_OK)
}

/// Encoder for a checkpoint: its embedded encoder config, with the model
/// path overridable via the environment.
fn checkpoint_encoder(ckpt: &Checkpoint) -> Result<EncoderHandle, CliError> {
    let mut enc = ckpt.config.encoder.clone();
    if let Some(p) = std::env::var_os(crate::config::MODEL_PATH_ENV) {
        enc.model_path = Some(PathBuf::from(p));
    }
    Ok(load_encoder(&enc)?)
}

fn load_checkpoint(cli: &Cli, path: &Path) -> Result<(Checkpoint, Option<PipelineConfig>), CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("checkpoint not found: {}", path.display())));
    }
    let ckpt = Checkpoint::load(path)?;
    let live = if cli.config.is_some() {
        let (cfg, _) = live_config(cli)?;
        ckpt.check_config(&cfg)?;
        Some(cfg)
    } else {
        None
    };
    Ok((ckpt, live))
}

pub fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (ckpt, live) = load_checkpoint(cli, &args.checkpoint)?;
    let GroupBy::Generator = args.group_by;
    let manifest = args
        .manifest
        .clone()
        .or_else(|| live.as_ref().and_then(|c| c.paths.test_manifest.clone().or_else(|| c.paths.manifest.clone())))
        .ok_or_else(|| CliError::Config("no manifest given (--manifest)".into()))?;
    let mut records = read_manifest(&manifest)?;
    if records.iter().any(|r| r.split == Split::Test) {
        records.retain(|r| r.split == Split::Test);
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("{} has no records to evaluate", manifest.display())));
    }
    let encoder = checkpoint_encoder(&ckpt)?;
    let dir = cli.output.clone().or_else(|| live.as_ref().map(output_dir)).unwrap_or_else(|| PathBuf::from("."));
    let _lock = OutputLock::acquire(&dir)?;
    let scores = score_records(&records, &ckpt, &encoder)?;
    // validate --include before writing anything
    mean_metrics(&group_report(&scores, DEFAULT_THRESHOLD), &args.include)?;
    let (reports, means) = write_eval_outputs(&dir, "", &scores, &args.include)?;
    for r in &reports {
        let ap = r.ap.map_or("-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(out, "{:<20} acc {:>6.2}  ap {:>6}  (real {}, fake {})", r.generator, r.accuracy, ap, r.n_real, r.n_fake);
    }
    print_means(out, "", &means);
    Ok(EXIT_OK)
}

pub fn cmd_predict(cli: &Cli, args: &PredictArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (ckpt, _) = load_checkpoint(cli, &args.checkpoint)?;
    let encoder = checkpoint_encoder(&ckpt)?;
    let results: Vec<Result<f64, PipelineError>> = args.images.par_iter().map(|p| score_image(p, &ckpt, &encoder)).collect();
    let mut failed = 0;
    for (path, res) in args.images.iter().zip(results) {
        match res {
            Ok(score) => {
                let label = if score >= DEFAULT_THRESHOLD { "fake" } else { "real" };
                let _ = writeln!(out, "{}\t{}\t{label}", path.display(), fmt_sig(score, 9));
            }
            Err(e) => {
                failed += 1;
                eprintln!("fuse: {e}");
            }
        }
    }
    Ok(if failed > 0 { EXIT_DATA } else { EXIT_OK })
}

pub fn features_header(mode: ReductionMode, spectral_len: Option<usize>, semantic: bool) -> String {
    let mut h = String::from("id,label,generator");
    if let Some(n) = spectral_len {
        for i in 0..n {
            write!(h, ",spectral_{}_{i}", mode.as_str()).expect("writing to String");
        }
    }
    if semantic {
        for i in 0..EMBEDDING_DIM {
            write!(h, ",semantic_{i}").expect("writing to String");
        }
    }
    h
}

pub fn cmd_extract_features(cli: &Cli, args: &ExtractArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (cfg, _) = live_config(cli)?;
    let manifest = args
        .manifest
        .clone()
        .or_else(|| cfg.paths.manifest.clone())
        .ok_or_else(|| CliError::Config("no manifest given (--manifest)".into()))?;
    let records = read_manifest(&manifest)?;
    let mode = cfg.features.reduction_mode;
    let want_spectral = !args.semantic_only;
    let want_semantic = !args.spectral_only;
    let encoder = load_encoder(&cfg.encoder)?;
    let dir = output_dir(&cfg);
    let out_path = if args.out.is_absolute() { args.out.clone() } else { dir.join(&args.out) };
    let _lock = OutputLock::acquire(&dir)?;

    let rows: Vec<Result<String, PipelineError>> = records
        .par_iter()
        .map(|r| {
            let (spec, sem) = record_features(&r.image_path, mode, &encoder, None)?;
            let mut line = format!("{},{},{}", crate::evaluation::csv_field(&r.id()), r.label.as_str(), crate::evaluation::csv_field(&r.generator));
            if want_spectral {
                spec.values.iter().for_each(|v| write!(line, ",{}", fmt_sig(*v, 9)).expect("writing to String"));
            }
            if want_semantic {
                sem.values().iter().for_each(|v| write!(line, ",{}", fmt_sig(f64::from(*v), 9)).expect("writing to String"));
            }
            Ok(line)
        })
        .collect();
    let spectral_len = want_spectral.then(|| mode.feature_len(crate::preprocess::STANDARD_SIZE, crate::preprocess::STANDARD_SIZE));
    let mut csv = features_header(mode, spectral_len, want_semantic);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row?);
        csv.push('\n');
    }
    write_file(&out_path, &csv)?;
    let _ = writeln!(out, "wrote {} rows to {}", records.len(), out_path.display());
    Ok(EXIT_OK)
}
