//! Subcommand implementations. Each builds its settings as flag → config
//! file → default, runs the corresponding core operation, and prints a
//! short deterministic summary (no timestamps, so reruns are
//! byte-identical).

use std::path::Path;

use genreshot_core::aggregate::{save_model, AggregatorConfig, AggregatorKind};
use genreshot_core::dataset::Dataset;
use genreshot_core::error::{Error, Result};
use genreshot_core::experiment::{
    corpus_dataset, predict_ids_fused, run_experiment, run_strategy_sweep, sweep_table,
    ExperimentSpec, Streams,
};
use genreshot_core::manifest::{read_manifest, TrailerRecord};
use genreshot_core::metrics::{evaluate_folds, EvalReport};
use genreshot_core::seed::{derive_seed, rng_for};
use genreshot_core::segment::{
    detect_shots, downsample_fps, write_boundaries, DetectorConfig, Shot, Strategy,
};
use genreshot_core::split::{
    fold_members, genre_stats, label_cardinality, label_density, make_folds,
    max_genre_deviation, read_splits, write_splits, SplitRecord, Subset,
};
use genreshot_core::synth::{self, FeatureSynthSpec, SweepCorpusSpec, VideoSynthSpec};
use genreshot_core::train::{fit, history_to_jsonl, predict_ids, TrainConfig};
use genreshot_core::video::read_video;
use genreshot_core::GENRES;
use rayon::prelude::*;

use crate::config::{pick, pick_opt, FileConfig};
use crate::{
    EvalArgs, FuseEvalArgs, ReportArgs, RunFlags, SegmentArgs, SplitArgs, StatsArgs, SweepArgs,
    SynthFeaturesArgs, SynthVideoArgs, TrainArgs,
};

fn root_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    pick(flag, file.seed, 0)
}

/// Fail early with the offending path in the message instead of a bare
/// "No such file" from deep inside a reader.
fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )))
    }
}

pub fn synth_video(args: SynthVideoArgs, file: &FileConfig) -> Result<()> {
    let section = &file.synth.video;
    let defaults = VideoSynthSpec::default();
    let spec = VideoSynthSpec {
        width: pick(args.width, section.width, defaults.width),
        height: pick(args.height, section.height, defaults.height),
        fps: pick(args.fps, section.fps, defaults.fps),
        shot_count: pick(args.shots, section.shots, defaults.shot_count),
        shot_len: pick(args.shot_len, section.shot_len, defaults.shot_len),
        cut_weight: pick(None, section.cut_weight, defaults.cut_weight),
        fade_weight: pick(None, section.fade_weight, defaults.fade_weight),
        black_weight: pick(None, section.black_weight, defaults.black_weight),
        fade_len: pick(None, section.fade_len, defaults.fade_len),
        black_len: pick(None, section.black_len, defaults.black_len),
    };
    let count = pick(args.count, section.count, 200);
    let seed = root_seed(args.seed, file);
    let manifest = synth::write_video_corpus(&args.out, &spec, count, seed)?;
    println!("wrote {count} videos, boundaries.csv, and {}", manifest.display());
    Ok(())
}

pub fn synth_features(args: SynthFeaturesArgs, file: &FileConfig) -> Result<()> {
    let section = &file.synth.features;
    let defaults = FeatureSynthSpec::default();
    let spec = FeatureSynthSpec {
        n_trailers: pick(args.count, section.count, defaults.n_trailers),
        width: pick(args.feature_width, section.feature_width, defaults.width),
        clips: pick(args.clips, section.clips, defaults.clips),
        sigma: pick(args.sigma, section.sigma, defaults.sigma),
        distractor_fraction: pick(args.distractor, section.distractor, defaults.distractor_fraction),
        backbone: pick(args.backbone, section.backbone.clone(), defaults.backbone),
        frames_per_clip: pick(None, section.frames_per_clip, defaults.frames_per_clip),
        fps: pick(None, section.fps, defaults.fps),
    };
    let seed = root_seed(args.seed, file);
    let corpus = synth::synth_features(&spec, seed)?;
    let manifest = synth::write_feature_corpus(&args.out, &corpus)?;
    println!(
        "wrote {} feature files (backbone {}) and {}",
        corpus.len(),
        spec.backbone,
        manifest.display()
    );
    Ok(())
}

pub fn segment(args: SegmentArgs, file: &FileConfig) -> Result<()> {
    let section = &file.detector;
    let defaults = DetectorConfig::default();
    let config = DetectorConfig::default()
        .with_bins(pick(args.bins, section.bins, defaults.bins))
        .with_cut_threshold(pick(args.cut_threshold, section.cut_threshold, defaults.cut_threshold))
        .with_black_threshold(pick(
            args.black_threshold,
            section.black_threshold,
            defaults.black_threshold,
        ))
        .with_min_shot_len(pick(args.min_shot_len, section.min_shot_len, defaults.min_shot_len));

    require_file(&args.manifest)?;
    let records = read_manifest(&args.manifest)?;
    let detected: Result<Vec<(String, Vec<Shot>)>> = records
        .par_iter()
        .map(|record| {
            let stored = record.video_path.as_deref().ok_or_else(|| {
                Error::validation(format!("record {:?} has no video path", record.id))
            })?;
            let video = read_video(&TrailerRecord::resolve(&args.manifest, stored))?;
            let frames = match args.fps {
                Some(dst) if dst != video.fps => downsample_fps(&video.frames, video.fps, dst)?,
                _ => video.frames,
            };
            let shots = detect_shots(&frames, &config)?;
            Ok((record.id.clone(), shots))
        })
        .collect();
    let map: indexmap::IndexMap<String, Vec<Shot>> = detected?.into_iter().collect();
    let total: usize = map.values().map(Vec::len).sum();
    write_boundaries(&args.out, &map)?;
    println!("segmented {} videos into {total} shots -> {}", map.len(), args.out.display());
    Ok(())
}

pub fn split(args: SplitArgs, file: &FileConfig) -> Result<()> {
    require_file(&args.manifest)?;
    let records = read_manifest(&args.manifest)?;
    let labelsets: Vec<_> = records.iter().map(|r| r.genres).collect();
    let n_folds = pick(args.folds, file.experiment.folds, 3);
    let ratios = pick(args.ratios, file.experiment.ratios, (0.7, 0.1, 0.2));
    let seed = root_seed(args.seed, file);

    let folds = make_folds(&labelsets, n_folds, ratios, seed)?;
    let mut rows = Vec::with_capacity(n_folds * records.len());
    for (fold, assignment) in folds.iter().enumerate() {
        for (record, &subset) in records.iter().zip(assignment) {
            rows.push(SplitRecord { trailer_id: record.id.clone(), fold, subset });
        }
        let count = |want: Subset| assignment.iter().filter(|&&s| s == want).count();
        println!(
            "fold {fold}: train {} / val {} / test {}, max genre deviation {:.2} pp",
            count(Subset::Train),
            count(Subset::Val),
            count(Subset::Test),
            max_genre_deviation(&labelsets, assignment) * 100.0
        );
    }
    write_splits(&args.out, &rows)?;
    println!("wrote {} assignments -> {}", rows.len(), args.out.display());
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<()> {
    require_file(&args.manifest)?;
    let records = read_manifest(&args.manifest)?;
    let labelsets: Vec<_> = records.iter().map(|r| r.genres).collect();
    let stats = genre_stats(&labelsets)?;
    println!("trailers:     {}", labelsets.len());
    println!("cardinality:  {:.3}", label_cardinality(&labelsets)?);
    println!("density:      {:.3}", label_density(&labelsets)?);
    println!("genre distribution:");
    for (g, name) in GENRES.iter().enumerate() {
        println!("  {name:<16} {:>5}  ({:.1}%)", stats.counts[g], stats.proportions[g] * 100.0);
    }
    if let Some(path) = args.co_occurrence {
        std::fs::write(&path, genreshot_core::split::co_occurrence_to_csv(&stats))?;
        println!("wrote co-occurrence matrix -> {}", path.display());
    }
    Ok(())
}

fn train_config(run: &RunFlags, file: &FileConfig) -> TrainConfig {
    let section = &file.train;
    let defaults = TrainConfig::default();
    TrainConfig {
        epochs: pick(run.epochs, section.epochs, defaults.epochs),
        batch: pick(run.batch, section.batch, defaults.batch),
        lr0: pick(run.lr0, section.lr0, defaults.lr0),
        plateau_patience: pick(None, section.plateau_patience, defaults.plateau_patience),
        lr_factor: pick(None, section.lr_factor, defaults.lr_factor),
        min_delta: pick(None, section.min_delta, defaults.min_delta),
        early_stop_patience: pick(None, section.early_stop_patience, defaults.early_stop_patience),
        ..defaults
    }
}

fn model_config(run: &RunFlags, file: &FileConfig, input_width: usize) -> Result<AggregatorConfig> {
    let section = &file.model;
    let defaults = AggregatorConfig::new(input_width);
    let kind: AggregatorKind = pick_opt(run.aggregator.clone(), file.experiment.aggregator.clone())
        .as_deref()
        .unwrap_or("transformer")
        .parse()?;
    Ok(AggregatorConfig {
        model_width: pick(run.model_width, section.model_width, defaults.model_width),
        kind,
        blocks: pick(run.blocks, section.blocks, defaults.blocks),
        heads: pick(run.heads, section.heads, defaults.heads),
        ffn_multiplier: pick(None, section.ffn_multiplier, defaults.ffn_multiplier),
        dropout: pick(run.dropout, section.dropout, defaults.dropout),
        positional: pick(None, section.positional, defaults.positional),
        gru_hidden: pick(None, section.gru_hidden, defaults.gru_hidden),
        conv_filters: pick(None, section.conv_filters, defaults.conv_filters),
        conv_width: pick(None, section.conv_width, defaults.conv_width),
        ..defaults
    })
}

fn strategy_of(run: &RunFlags, file: &FileConfig) -> Result<Strategy> {
    Strategy::parse(
        pick_opt(run.strategy.clone(), file.experiment.strategy.clone())
            .as_deref()
            .unwrap_or("shot-24"),
    )
}

fn snippet_len(flag: Option<usize>, file: &FileConfig) -> usize {
    pick(flag, file.experiment.clips_per_snippet, 30)
}

fn subset_ids(splits: &Path, fold: usize, subset: &str) -> Result<Vec<String>> {
    require_file(splits)?;
    let records = read_splits(splits)?;
    let (train, val, test) = fold_members(&records, fold);
    let ids = match subset.parse::<Subset>()? {
        Subset::Train => train,
        Subset::Val => val,
        Subset::Test => test,
    };
    if ids.is_empty() {
        return Err(Error::validation(format!(
            "fold {fold} has no {subset} rows in {}",
            splits.display()
        )));
    }
    Ok(ids)
}

pub fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    if args.stream > 1 {
        return Err(Error::validation("stream must be 0 or 1"));
    }
    let seed = root_seed(args.run.seed, file);
    require_file(&args.manifest)?;
    let mut dataset = Dataset::load(&args.manifest)?;
    if args.shuffle_labels {
        dataset = dataset.with_shuffled_labels(&mut rng_for(seed, "labels/shuffle"));
    }
    let train_ids = subset_ids(&args.splits, args.fold, "train")?;
    let val_ids = subset_ids(&args.splits, args.fold, "val")?;

    let model_cfg = model_config(&args.run, file, dataset.feature_width())?;
    let strategy = strategy_of(&args.run, file)?;
    // Seeds match the in-process experiment runner, so `split` + `train` +
    // `eval` per fold reproduces one of its cells exactly.
    let (fold, stream) = (args.fold, args.stream);
    let model = genreshot_core::aggregate::AggregatorModel::new(
        model_cfg,
        derive_seed(seed, &format!("model/fold{fold}/stream{stream}")),
    )?;
    let config = TrainConfig {
        snippet_len: snippet_len(args.run.clips_per_snippet, file),
        strategy_tag: strategy.to_string(),
        seed: derive_seed(seed, &format!("train/fold{fold}/stream{stream}")),
        ..train_config(&args.run, file)
    };

    let outcome = fit(&dataset, &train_ids, &val_ids, model, &config)?;
    save_model(&args.out, &outcome.model)?;
    if let Some(path) = &args.history {
        std::fs::write(path, history_to_jsonl(&outcome.history))?;
    }
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "trained {} epochs (best epoch {}, val loss {:.6}, val micro AP {:.4}){}",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss,
        best.val_micro_ap,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    println!("saved checkpoint -> {}", args.out.display());
    Ok(())
}

fn emit_report(report: &EvalReport, out: Option<&Path>) -> Result<()> {
    print!("{}", report.render_text());
    if let Some(path) = out {
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        std::fs::write(path, json)?;
        println!("wrote report -> {}", path.display());
    }
    Ok(())
}

pub fn eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    require_file(&args.manifest)?;
    let dataset = Dataset::load(&args.manifest)?;
    let ids = subset_ids(&args.splits, args.fold, &args.subset)?;
    require_file(&args.model)?;
    let model = genreshot_core::aggregate::load_model(&args.model)?;
    let c = snippet_len(args.clips_per_snippet, file);
    let preds = predict_ids(&model, &dataset, &ids, c)?;
    let report = evaluate_folds(&[preds])?;
    emit_report(&report, args.out.as_deref())
}

pub fn fuse_eval(args: FuseEvalArgs, file: &FileConfig) -> Result<()> {
    require_file(&args.manifest_a)?;
    require_file(&args.manifest_b)?;
    let stream_a = Dataset::load(&args.manifest_a)?;
    let stream_b = Dataset::load(&args.manifest_b)?;
    let ids = subset_ids(&args.splits, args.fold, &args.subset)?;
    require_file(&args.model_a)?;
    require_file(&args.model_b)?;
    let model_a = genreshot_core::aggregate::load_model(&args.model_a)?;
    let model_b = genreshot_core::aggregate::load_model(&args.model_b)?;
    let c = snippet_len(args.clips_per_snippet, file);
    let preds = predict_ids_fused(&model_a, &stream_a, &model_b, &stream_b, &ids, c)?;
    let report = evaluate_folds(&[preds])?;
    emit_report(&report, args.out.as_deref())
}

pub fn sweep(args: SweepArgs, file: &FileConfig) -> Result<()> {
    let seed = root_seed(args.run.seed, file);
    let section = &file.sweep;
    let axis = pick_opt(args.axis.clone(), section.axis.clone());
    let axis = axis.as_deref().unwrap_or("strategy");
    let n_folds = pick(args.folds, file.experiment.folds, 3);
    let template = ExperimentSpec {
        strategy: strategy_of(&args.run, file)?,
        fps: pick(None, file.experiment.fps, 24),
        clips_per_snippet: snippet_len(args.run.clips_per_snippet, file),
        aggregator: pick_opt(args.run.aggregator.clone(), file.experiment.aggregator.clone())
            .as_deref()
            .unwrap_or("transformer")
            .parse()?,
        // The strategy axis grid overrides this per cell; the clips axis
        // honors it as-is.
        streams: file.experiment.streams.as_deref().unwrap_or("single").parse()?,
        seed,
        n_folds,
        ratios: pick(None, file.experiment.ratios, (0.7, 0.1, 0.2)),
    };
    let train_cfg = train_config(&args.run, file);
    // Corpus width is known up front; run_experiment overrides per stream.
    let width = pick(args.feature_width, section.feature_width, 64);
    let model_cfg = model_config(&args.run, file, width)?;
    std::fs::create_dir_all(&args.out)?;

    let rows: Vec<(String, EvalReport)> = match axis {
        "strategy" => {
            let corpus = SweepCorpusSpec {
                n_trailers: pick(args.count, section.count, 120),
                width,
                sigma: pick(args.sigma, section.sigma, 0.3),
                shot_count: pick(None, section.shots, (6, 12)),
                shot_len: pick(None, section.shot_len, (20, 90)),
                ..SweepCorpusSpec::default()
            };
            run_strategy_sweep(&corpus, &template, &train_cfg, &model_cfg)?
                .into_iter()
                .map(|(spec, run)| (spec.label(), run.report))
                .collect()
        }
        "clips" => {
            let list = pick(args.clips_list.clone(), section.clips_list.clone(), vec![5, 10, 30]);
            let corpus = FeatureSynthSpec {
                n_trailers: pick(args.count, section.count, 120),
                width,
                sigma: pick(args.sigma, section.sigma, 0.3),
                ..FeatureSynthSpec::default()
            };
            let stream_a = corpus_dataset(&synth::synth_features(&corpus, seed)?)?;
            let stream_b = match template.streams {
                Streams::Single => None,
                Streams::Fusion => {
                    let second =
                        FeatureSynthSpec { backbone: "synth-b".to_string(), ..corpus.clone() };
                    Some(corpus_dataset(&synth::synth_features(&second, seed)?)?)
                }
            };
            let mut rows = Vec::with_capacity(list.len());
            for c in list {
                let spec = ExperimentSpec { clips_per_snippet: c, ..template.clone() };
                let streams: Vec<&Dataset> = match &stream_b {
                    None => vec![&stream_a],
                    Some(b) => vec![&stream_a, b],
                };
                let run = run_experiment(&streams, &spec, &train_cfg, &model_cfg)?;
                rows.push((format!("c={c:02}"), run.report));
            }
            rows
        }
        other => {
            return Err(Error::validation(format!(
                "unknown sweep axis {other:?} (expected strategy or clips)"
            )))
        }
    };

    for (label, report) in &rows {
        let name = format!("{}.json", label.replace(['/', '='], "_"));
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        std::fs::write(args.out.join(&name), json)?;
    }
    let table = sweep_table(&rows);
    std::fs::write(args.out.join("table.txt"), &table)?;
    print!("{table}");
    println!("wrote {} reports and table.txt -> {}", rows.len(), args.out.display());
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut rows = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        require_file(path)?;
        let text = std::fs::read_to_string(path)?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("bad report {}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::validation(format!("bad report path {}", path.display())))?;
        rows.push((label.to_string(), report));
    }
    let table = sweep_table(&rows);
    print!("{table}");
    if let Some(path) = args.out {
        std::fs::write(&path, &table)?;
        println!("wrote table -> {}", path.display());
    }
    Ok(())
}
