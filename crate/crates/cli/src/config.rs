//! TOML configuration file. Every tunable a command-line flag exposes can
//! also be set here; flags win when both are present. Unknown keys are
//! rejected so typos surface instead of silently using defaults.

use std::path::Path;

use genreshot_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub strategy: Option<String>,
    pub fps: Option<u32>,
    pub clips_per_snippet: Option<usize>,
    pub aggregator: Option<String>,
    pub streams: Option<String>,
    pub folds: Option<usize>,
    pub ratios: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr0: Option<f64>,
    pub plateau_patience: Option<usize>,
    pub lr_factor: Option<f64>,
    pub min_delta: Option<f64>,
    pub early_stop_patience: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub model_width: Option<usize>,
    pub blocks: Option<usize>,
    pub heads: Option<usize>,
    pub ffn_multiplier: Option<usize>,
    pub dropout: Option<f64>,
    pub positional: Option<bool>,
    pub gru_hidden: Option<usize>,
    pub conv_filters: Option<usize>,
    pub conv_width: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub bins: Option<usize>,
    pub cut_threshold: Option<f64>,
    pub black_threshold: Option<f64>,
    pub min_shot_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default)]
    pub video: SynthVideoSection,
    #[serde(default)]
    pub features: SynthFeaturesSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthVideoSection {
    pub count: Option<usize>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub fps: Option<u32>,
    pub shots: Option<(usize, usize)>,
    pub shot_len: Option<(usize, usize)>,
    pub cut_weight: Option<f64>,
    pub fade_weight: Option<f64>,
    pub black_weight: Option<f64>,
    pub fade_len: Option<usize>,
    pub black_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFeaturesSection {
    pub count: Option<usize>,
    pub feature_width: Option<usize>,
    pub clips: Option<(usize, usize)>,
    pub sigma: Option<f64>,
    pub distractor: Option<f64>,
    pub backbone: Option<String>,
    pub frames_per_clip: Option<usize>,
    pub fps: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub clips_list: Option<Vec<usize>>,
    pub count: Option<usize>,
    pub feature_width: Option<usize>,
    pub sigma: Option<f64>,
    pub shots: Option<(usize, usize)>,
    pub shot_len: Option<(usize, usize)>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text)
                    .map_err(|e| Error::validation(format!("bad config {}: {e}", path.display())))
            }
        }
    }
}

/// Flag beats file beats default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag beats file; `None` when neither is set.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
