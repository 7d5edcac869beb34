//! `genreshot` — shot-based trailer genre classification pipeline.
//!
//! Subcommands cover the full loop on synthetic or imported data: generate
//! corpora (`synth video`, `synth features`), detect shots (`segment`),
//! make stratified splits (`split`), inspect label statistics (`stats`),
//! train and evaluate aggregators (`train`, `eval`, `fuse-eval`), and run
//! the comparison grids (`sweep`, `report`).
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric
//! failure. All commands are deterministic given the same inputs and
//! `--seed`; reruns produce byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

fn parse_usize_pair(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected MIN,MAX, got {s:?}"));
    }
    let lo = parts[0].trim().parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi = parts[1].trim().parse().map_err(|e| format!("bad MAX: {e}"))?;
    Ok((lo, hi))
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected TRAIN,VAL,TEST, got {s:?}"));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|e| format!("bad ratio: {e}"))?;
    }
    Ok((v[0], v[1], v[2]))
}

#[derive(Parser)]
#[command(name = "genreshot", version, about = "Shot-based trailer genre classification")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic corpora with known ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Detect shot boundaries in a video manifest.
    Segment(SegmentArgs),
    /// Write stratified train/val/test folds for a manifest.
    Split(SplitArgs),
    /// Label statistics: cardinality, density, genre distribution.
    Stats(StatsArgs),
    /// Train one aggregator on one fold.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one fold subset.
    Eval(EvalArgs),
    /// Evaluate two stream checkpoints with late logit fusion.
    FuseEval(FuseEvalArgs),
    /// Run a comparison grid on synthetic data, one report per cell.
    Sweep(SweepArgs),
    /// Combine report JSON files into one table.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Videos with planted shots and transitions, plus ground-truth
    /// boundaries.
    Video(SynthVideoArgs),
    /// Clip-feature files with a planted genre signal.
    Features(SynthFeaturesArgs),
}

#[derive(Args)]
struct SynthVideoArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of videos.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    fps: Option<u32>,
    /// Shots per video as MIN,MAX.
    #[arg(long, value_parser = parse_usize_pair, value_name = "MIN,MAX")]
    shots: Option<(usize, usize)>,
    /// Content frames per shot as MIN,MAX.
    #[arg(long, value_parser = parse_usize_pair, value_name = "MIN,MAX")]
    shot_len: Option<(usize, usize)>,
}

#[derive(Args)]
struct SynthFeaturesArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of trailers.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Clip feature width b.
    #[arg(long)]
    feature_width: Option<usize>,
    /// Clips per trailer as MIN,MAX.
    #[arg(long, value_parser = parse_usize_pair, value_name = "MIN,MAX")]
    clips: Option<(usize, usize)>,
    /// Noise scale on signal clips.
    #[arg(long)]
    sigma: Option<f64>,
    /// Fraction of pure-noise clips.
    #[arg(long)]
    distractor: Option<f64>,
    /// Backbone tag; also salts the planted prototypes, so two tags give
    /// two fusable views of the same labels.
    #[arg(long)]
    backbone: Option<String>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Manifest whose records carry video paths.
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output boundary CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Downsample to this rate before detection (must divide each video's
    /// rate).
    #[arg(long)]
    fps: Option<u32>,
    #[arg(long)]
    cut_threshold: Option<f64>,
    #[arg(long)]
    black_threshold: Option<f64>,
    #[arg(long)]
    min_shot_len: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output split CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subset fractions as TRAIN,VAL,TEST.
    #[arg(long, value_parser = parse_ratios, value_name = "TRAIN,VAL,TEST")]
    ratios: Option<(f64, f64, f64)>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Also write the co-occurrence matrix as CSV.
    #[arg(long, value_name = "PATH")]
    co_occurrence: Option<PathBuf>,
}

/// Flags shared by the training-side commands; each maps to a config-file
/// key under [experiment], [train], or [model].
#[derive(Args, Clone)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Clips per snippet (c).
    #[arg(long, short = 'c')]
    clips_per_snippet: Option<usize>,
    /// Partitioning tag recorded with results, e.g. shot-24 or seq-32.
    #[arg(long)]
    strategy: Option<String>,
    /// transformer, gru, or conv.
    #[arg(long)]
    aggregator: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    /// Width d after the reduction layer.
    #[arg(long)]
    model_width: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Split CSV from `genreshot split`.
    #[arg(long, value_name = "PATH")]
    splits: PathBuf,
    #[arg(long)]
    fold: usize,
    /// Checkpoint output path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Optional epoch-history JSONL output.
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
    /// Train on permuted labels (chance-level control).
    #[arg(long)]
    shuffle_labels: bool,
    /// Fusion stream index; offsets the derived seeds so two streams train
    /// differently (0 or 1).
    #[arg(long, default_value_t = 0)]
    stream: usize,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_name = "PATH")]
    splits: PathBuf,
    #[arg(long)]
    fold: usize,
    /// Checkpoint from `genreshot train`.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// train, val, or test.
    #[arg(long, default_value = "test")]
    subset: String,
    /// Report JSON output path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, short = 'c')]
    clips_per_snippet: Option<usize>,
}

#[derive(Args)]
struct FuseEvalArgs {
    #[arg(long, value_name = "PATH")]
    manifest_a: PathBuf,
    #[arg(long, value_name = "PATH")]
    model_a: PathBuf,
    #[arg(long, value_name = "PATH")]
    manifest_b: PathBuf,
    #[arg(long, value_name = "PATH")]
    model_b: PathBuf,
    /// Split CSV; subsets apply to both streams.
    #[arg(long, value_name = "PATH")]
    splits: PathBuf,
    #[arg(long)]
    fold: usize,
    #[arg(long, default_value = "test")]
    subset: String,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, short = 'c')]
    clips_per_snippet: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Output directory for per-cell reports and the combined table.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// strategy (partitioning x streams grid) or clips (snippet-length
    /// sweep).
    #[arg(long)]
    axis: Option<String>,
    /// Snippet lengths for --axis clips, e.g. 5,10,30.
    #[arg(long, value_delimiter = ',', value_name = "C,...")]
    clips_list: Option<Vec<usize>>,
    /// Trailers in the generated corpus.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    feature_width: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files; row labels are the file stems.
    #[arg(required = true, value_name = "REPORT.JSON")]
    reports: Vec<PathBuf>,
    /// Write the table here as well as printing it.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(file) => file,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let result = match cli.command {
        Command::Synth(SynthCommand::Video(args)) => commands::synth_video(args, &file),
        Command::Synth(SynthCommand::Features(args)) => commands::synth_features(args, &file),
        Command::Segment(args) => commands::segment(args, &file),
        Command::Split(args) => commands::split(args, &file),
        Command::Stats(args) => commands::stats(args),
        Command::Train(args) => commands::train(args, &file),
        Command::Eval(args) => commands::eval(args, &file),
        Command::FuseEval(args) => commands::fuse_eval(args, &file),
        Command::Sweep(args) => commands::sweep(args, &file),
        Command::Report(args) => commands::report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
