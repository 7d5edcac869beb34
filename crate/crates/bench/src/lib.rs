//! Shared fixtures for the pipeline benchmarks: deterministic synthetic
//! inputs sized like the acceptance-scale workloads.

use genreshot_core::aggregate::{AggregatorConfig, AggregatorModel};
use genreshot_core::seed::rng_for;
use genreshot_core::synth::{synth_video, SynthVideo, VideoSynthSpec};
use genreshot_core::GenreSet;
use ndarray::Array2;
use rand::Rng;

/// One mid-sized synthetic video (default spec, fixed seed).
pub fn bench_video() -> SynthVideo {
    let mut rng = rng_for(97, "bench/video");
    synth_video(&VideoSynthSpec::default(), &mut rng).expect("valid spec")
}

/// A `c x b` feature block with standard-normal entries.
pub fn bench_features(c: usize, b: usize) -> Array2<f64> {
    let mut rng = rng_for(97, "bench/features");
    Array2::from_shape_fn((c, b), |_| rng.gen_range(-1.0..1.0))
}

/// A small transformer sized like the training-property tests.
pub fn bench_model(b: usize, d: usize) -> AggregatorModel {
    let config = AggregatorConfig::new(b).with_model_width(d).with_heads(4).with_blocks(4);
    AggregatorModel::new(config, 97).expect("valid config")
}

/// Correlated multi-label sets for splitter benchmarks.
pub fn bench_labelsets(n: usize) -> Vec<GenreSet> {
    let mut rng = rng_for(97, "bench/labels");
    genreshot_core::synth::sample_genre_sets(n, &mut rng)
}

/// Scores with plateaus of ties, labels correlated with score.
pub fn bench_scores(n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = rng_for(97, "bench/scores");
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = (rng.gen_range(0.0..1.0f64) * 20.0).round() / 20.0;
        scores.push(s);
        labels.push(rng.gen_range(0.0..1.0) < s);
    }
    (scores, labels)
}
