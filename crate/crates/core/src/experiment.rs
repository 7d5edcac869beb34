//! Experiment orchestration: run one (strategy, aggregator, streams) cell
//! over stratified folds, or sweep the partitioning-strategy grid on the
//! planted-boundary corpus.
//!
//! Every random draw descends from the experiment seed: fold splits use the
//! `split/fold{k}` streams, and each fold's model init and training seeds
//! are derived from `model/fold{k}/stream{s}` and `train/fold{k}/stream{s}`
//! tags, so reruns are bit-identical and folds decorrelate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregatorConfig, AggregatorKind, AggregatorModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_folds, predict_trailer_fused, EvalReport, TrailerPrediction};
use crate::seed::derive_seed;
use crate::segment::Strategy;
use crate::split::{make_folds, Subset};
use crate::synth::{synth_strategy_features, SweepCorpusSpec};
use crate::train::{fit, predict_ids, EpochRecord, TrainConfig};

/// Frame rates the downsampling study enumerates; other values are legal
/// user overrides.
pub const CANONICAL_FPS: [u32; 5] = [4, 6, 8, 12, 24];

/// Clips-per-snippet range the sweep study enumerates.
pub const SNIPPET_SWEEP_RANGE: (usize, usize) = (5, 60);

/// Strategy grid for the partitioning comparison.
pub const SWEEP_STRATEGIES: [Strategy; 4] = [
    Strategy::Seq { f: 24 },
    Strategy::Seq { f: 32 },
    Strategy::Shot { f: 24 },
    Strategy::Shot { f: 32 },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Streams {
    Single,
    Fusion,
}

impl Streams {
    pub fn count(self) -> usize {
        match self {
            Streams::Single => 1,
            Streams::Fusion => 2,
        }
    }
}

impl std::fmt::Display for Streams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Streams::Single => "single",
            Streams::Fusion => "fusion",
        })
    }
}

impl std::str::FromStr for Streams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Streams::Single),
            "fusion" => Ok(Streams::Fusion),
            _ => Err(Error::validation(format!("unknown streams mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub strategy: Strategy,
    /// Nominal frame rate of the features; bookkeeping only once features
    /// are extracted.
    pub fps: u32,
    /// Clips per snippet (`c`).
    pub clips_per_snippet: usize,
    pub aggregator: AggregatorKind,
    pub streams: Streams,
    pub seed: u64,
    pub n_folds: usize,
    /// Train/val/test ratios for the stratified splitter.
    pub ratios: (f64, f64, f64),
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            strategy: Strategy::Shot { f: 24 },
            fps: 24,
            clips_per_snippet: 30,
            aggregator: AggregatorKind::Transformer,
            streams: Streams::Single,
            seed: 0,
            n_folds: 3,
            ratios: (0.7, 0.1, 0.2),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::validation("fps must be positive"));
        }
        if self.clips_per_snippet == 0 {
            return Err(Error::validation("clips_per_snippet must be ≥ 1"));
        }
        if self.n_folds == 0 {
            return Err(Error::validation("need at least one fold"));
        }
        Ok(())
    }

    /// Row label used in reports, e.g. `shot-24/transformer/fusion`.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.strategy, self.aggregator, self.streams)
    }
}

/// Artifacts from one fold: per-stream training histories and the
/// full-inference predictions on the test subset.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: usize,
    pub histories: Vec<Vec<EpochRecord>>,
    pub best_epochs: Vec<usize>,
    pub stopped_early: Vec<bool>,
    pub predictions: Vec<TrailerPrediction>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub label: String,
    pub report: EvalReport,
    pub folds: Vec<FoldRun>,
}

fn subset_ids(dataset: &Dataset, assignment: &[Subset]) -> [Vec<String>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (item, &subset) in dataset.items().iter().zip(assignment) {
        let bucket = match subset {
            Subset::Train => 0,
            Subset::Val => 1,
            Subset::Test => 2,
        };
        out[bucket].push(item.id.clone());
    }
    out
}

/// Full-inference fused predictions for a list of trailer ids. Both
/// streams must contain every id with identical labels and clip counts.
pub fn predict_ids_fused(
    model_a: &AggregatorModel,
    stream_a: &Dataset,
    model_b: &AggregatorModel,
    stream_b: &Dataset,
    ids: &[String],
    c: usize,
) -> Result<Vec<TrailerPrediction>> {
    ids.par_iter()
        .map(|id| {
            let a = stream_a
                .get(id)
                .ok_or_else(|| Error::validation(format!("unknown trailer id {id:?}")))?;
            let b = stream_b
                .get(id)
                .ok_or_else(|| Error::validation(format!("stream B lacks trailer {id:?}")))?;
            let probs = predict_trailer_fused(model_a, &a.features, model_b, &b.features, c)?;
            Ok(TrailerPrediction::new(id.clone(), probs, a.truth))
        })
        .collect()
}

fn check_streams(streams: &[&Dataset], spec: &ExperimentSpec) -> Result<()> {
    if streams.len() != spec.streams.count() {
        return Err(Error::validation(format!(
            "{} mode needs {} feature stream(s), got {}",
            spec.streams,
            spec.streams.count(),
            streams.len()
        )));
    }
    if let [a, b] = streams {
        if a.len() != b.len() {
            return Err(Error::validation(format!(
                "fusion streams disagree on corpus size: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        for item in a.items() {
            let other = b.get(&item.id).ok_or_else(|| {
                Error::validation(format!("fusion stream B lacks trailer {:?}", item.id))
            })?;
            if other.truth != item.truth {
                return Err(Error::validation(format!(
                    "fusion streams disagree on labels for {:?}",
                    item.id
                )));
            }
            if other.features.nrows() != item.features.nrows() {
                return Err(Error::validation(format!(
                    "fusion streams disagree on clip count for {:?}: {} vs {}",
                    item.id,
                    item.features.nrows(),
                    other.features.nrows()
                )));
            }
        }
    }
    Ok(())
}

/// Train and evaluate one experiment cell: for each fold, split, train one
/// model per stream, and run full inference on the test subset; then
/// summarize the folds into a report.
pub fn run_experiment(
    streams: &[&Dataset],
    spec: &ExperimentSpec,
    train: &TrainConfig,
    model: &AggregatorConfig,
) -> Result<ExperimentRun> {
    spec.validate()?;
    check_streams(streams, spec)?;
    let labelsets = streams[0].labelsets();
    let assignments = make_folds(&labelsets, spec.n_folds, spec.ratios, spec.seed)?;

    let mut folds = Vec::with_capacity(spec.n_folds);
    for (fold, assignment) in assignments.iter().enumerate() {
        let [train_ids, val_ids, test_ids] = subset_ids(streams[0], assignment);

        let mut models = Vec::with_capacity(streams.len());
        let mut histories = Vec::with_capacity(streams.len());
        let mut best_epochs = Vec::with_capacity(streams.len());
        let mut stopped_early = Vec::with_capacity(streams.len());
        for (s, dataset) in streams.iter().enumerate() {
            let config = AggregatorConfig {
                input_width: dataset.feature_width(),
                kind: spec.aggregator,
                ..model.clone()
            };
            let init_seed = derive_seed(spec.seed, &format!("model/fold{fold}/stream{s}"));
            let fresh = AggregatorModel::new(config, init_seed)?;
            let fold_train = TrainConfig {
                seed: derive_seed(spec.seed, &format!("train/fold{fold}/stream{s}")),
                snippet_len: spec.clips_per_snippet,
                strategy_tag: spec.strategy.to_string(),
                ..train.clone()
            };
            let outcome = fit(dataset, &train_ids, &val_ids, fresh, &fold_train)?;
            histories.push(outcome.history);
            best_epochs.push(outcome.best_epoch);
            stopped_early.push(outcome.stopped_early);
            models.push(outcome.model);
        }

        let predictions = match streams {
            [only] => predict_ids(&models[0], only, &test_ids, spec.clips_per_snippet)?,
            [a, b] => predict_ids_fused(
                &models[0],
                a,
                &models[1],
                b,
                &test_ids,
                spec.clips_per_snippet,
            )?,
            _ => unreachable!("stream count validated above"),
        };
        folds.push(FoldRun { fold, histories, best_epochs, stopped_early, predictions });
    }

    let per_fold: Vec<Vec<TrailerPrediction>> =
        folds.iter().map(|f| f.predictions.clone()).collect();
    Ok(ExperimentRun { label: spec.label(), report: evaluate_folds(&per_fold)?, folds })
}

/// Materialize a generated corpus as an in-memory dataset.
pub fn corpus_dataset(
    corpus: &[(crate::manifest::TrailerRecord, crate::dvtf::FeatureSequence)],
) -> Result<Dataset> {
    let items = corpus
        .iter()
        .map(|(record, features)| crate::dataset::DatasetItem {
            id: record.id.clone(),
            features: features.to_f64(),
            truth: record.genres,
        })
        .collect();
    Dataset::new(items)
}

/// Run the full strategy × streams grid on the planted-boundary corpus.
/// The fusion rows use a second backbone tag, which re-salts both the
/// prototype matrix and the noise, so the two streams are independent
/// views of the same trailers.
pub fn run_strategy_sweep(
    corpus: &SweepCorpusSpec,
    template: &ExperimentSpec,
    train: &TrainConfig,
    model: &AggregatorConfig,
) -> Result<Vec<(ExperimentSpec, ExperimentRun)>> {
    let mut out = Vec::with_capacity(SWEEP_STRATEGIES.len() * 2);
    for strategy in SWEEP_STRATEGIES {
        for streams in [Streams::Single, Streams::Fusion] {
            let spec = ExperimentSpec { strategy, streams, ..template.clone() };
            let corpus_a = SweepCorpusSpec {
                backbone: format!("{}-a", corpus.backbone),
                ..corpus.clone()
            };
            let stream_a =
                corpus_dataset(&synth_strategy_features(&corpus_a, strategy, spec.seed)?)?;
            let run = match streams {
                Streams::Single => run_experiment(&[&stream_a], &spec, train, model)?,
                Streams::Fusion => {
                    let corpus_b = SweepCorpusSpec {
                        backbone: format!("{}-b", corpus.backbone),
                        ..corpus.clone()
                    };
                    let stream_b =
                        corpus_dataset(&synth_strategy_features(&corpus_b, strategy, spec.seed)?)?;
                    run_experiment(&[&stream_a, &stream_b], &spec, train, model)?
                }
            };
            out.push((spec, run));
        }
    }
    Ok(out)
}

/// Fixed-width comparison table over experiment cells; deterministic, so
/// reruns produce identical bytes.
pub fn sweep_table(rows: &[(String, EvalReport)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<label_width$}  {:>14}  {:>14}  {:>14}  {:>14}\n",
        "cell", "micro AP", "macro AP", "weighted AP", "sample AP"
    );
    for (label, report) in rows {
        let cell = |s: &crate::metrics::MetricSummary| format!("{:.2} ± {:.2}", s.mean, s.std);
        out.push_str(&format!(
            "{:<label_width$}  {:>14}  {:>14}  {:>14}  {:>14}\n",
            label,
            cell(&report.micro_ap),
            cell(&report.macro_ap),
            cell(&report.weighted_ap),
            cell(&report.sample_ap),
        ));
    }
    out
}
