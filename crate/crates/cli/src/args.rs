use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use omoq_core::net::Selection;
use omoq_core::pipeline::Target;
use omoq_core::spectral::AlignmentMode;

#[derive(Debug, Parser)]
#[command(name = "omoq", version, about = "Objective MOS for time-scale modified audio")]
pub struct Cli {
    /// TOML settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a feature table from a manifest.
    Features(FeaturesArgs),
    /// Train one network per seed on a feature table.
    Train(TrainArgs),
    /// Score a single pair or every pair of a manifest.
    Predict(PredictArgs),
    /// Summarize scores per method, class and time-scale ratio.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ExtractionFlags {
    #[arg(long, value_parser = parse_alignment)]
    pub alignment: Option<AlignmentMode>,
    #[arg(long)]
    pub frame_size: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunFlags {
    /// Worker threads for feature extraction.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Time-scale ratio applied to every pair instead of the manifest's.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Keep going when a row fails.
    #[arg(long)]
    pub skip_errors: bool,
}

#[derive(Debug, Args)]
pub struct RefsFlag {
    /// Add references as test material with a score of 5.
    #[arg(long, overrides_with = "no_include_refs")]
    pub include_refs: bool,
    #[arg(long, overrides_with = "include_refs")]
    pub no_include_refs: bool,
}

impl RefsFlag {
    pub fn value(&self) -> Option<bool> {
        match (self.include_refs, self.no_include_refs) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub extraction: ExtractionFlags,
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub refs: RefsFlag,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Output directory for models, histories and the summary.
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive seed range such as `0..9`, or a single seed.
    #[arg(long, value_parser = parse_seeds, default_value = "0..0")]
    pub seeds: RangeInclusive<u64>,
    #[arg(long, value_parser = parse_target)]
    pub target: Option<Target>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_selection)]
    pub selection: Option<Selection>,
    #[command(flatten)]
    pub refs: RefsFlag,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "ref", requires = "test", conflicts_with = "manifest")]
    pub reference: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Results file for manifest mode.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Results file written by `predict`.
    #[arg(long, conflicts_with_all = ["manifest", "model"])]
    pub results: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    pub model: Option<PathBuf>,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

fn parse_alignment(s: &str) -> Result<AlignmentMode, String> {
    s.parse().map_err(|e: omoq_core::Error| e.to_string())
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse().map_err(|e: omoq_core::Error| e.to_string())
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    match s {
        "all_splits" | "all" => Ok(Selection::AllSplits),
        "train_val" => Ok(Selection::TrainVal),
        other => Err(format!("unknown selection '{other}' (all_splits, train_val)")),
    }
}

pub fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed '{t}'"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
        None => {
            let v = num(s)?;
            (v, v)
        }
    };
    if a > b {
        return Err(format!("empty seed range {s}"));
    }
    Ok(a..=b)
}
