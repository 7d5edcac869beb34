//! Shot-based movie trailer genre classification.
//!
//! The pipeline has two halves. Snippet generation turns a trailer into a
//! sequence of fixed-length clips: shot detection (or imported boundaries),
//! per-shot partitioning with black right-padding, and snippet sampling over
//! the clip sequence. Snippet classification runs each snippet's clip
//! features through a small aggregation model — a transformer encoder by
//! default, GRU and convolutional baselines for comparison — ending in ten
//! per-genre sigmoid probabilities that are averaged over a trailer's
//! snippets at inference time.
//!
//! Everything downstream of feature files is pure `f64` CPU math on a
//! custom reverse-mode tape, so results are bit-reproducible given the same
//! top-level seed (see [`seed`]).

// Validators deliberately write `!(x > 0.0)` instead of `x <= 0.0`: the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod dataset;
pub mod dvtf;
pub mod error;
pub mod experiment;
pub mod genres;
pub mod manifest;
pub mod metrics;
pub mod seed;
pub mod segment;
pub mod snippet;
pub mod split;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod video;

pub use aggregate::{
    fuse_logits, load_model, save_model, AggregatorConfig, AggregatorKind, AggregatorModel,
};
pub use dvtf::{read_features, write_features, FeatureSequence};
pub use error::{Error, Result};
pub use experiment::{
    corpus_dataset, predict_ids_fused, run_experiment, run_strategy_sweep, sweep_table,
    ExperimentRun, ExperimentSpec, FoldRun, Streams,
};
pub use genres::{genre_index, GenreSet, GENRES, GENRE_COUNT};
pub use manifest::{parse_manifest, read_manifest, write_manifest, TrailerRecord};
pub use metrics::{
    average_precision, evaluate_folds, macro_ap, micro_ap, predict_trailer, predict_trailer_fused,
    sample_ap, weighted_ap, EvalReport, TrailerPrediction,
};
pub use segment::{
    build_clip_sequence, detect_shots, import_boundaries, partition_shot, seq_partition, Clip,
    DetectorConfig, Shot, Strategy,
};
pub use dataset::{Dataset, DatasetItem};
pub use snippet::{enumerate_inference_snippets, sample_training_snippet, Snippet};
pub use split::{
    label_cardinality, label_density, make_folds, sois_split, GenreStats, SplitRecord, Subset,
};
pub use synth::{
    synth_features, synth_strategy_features, synth_video, synth_video_corpus, write_feature_corpus,
    write_video_corpus, FeatureSynthSpec, SweepCorpusSpec, SynthVideo, VideoSynthSpec,
};
pub use tensor::{ParamStore, Tape};
pub use train::{fit, TrainConfig, TrainOutcome};
pub use video::{read_video, write_video, Frame, Video};
