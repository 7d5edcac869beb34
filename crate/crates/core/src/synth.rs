//! Synthetic corpora with known ground truth.
//!
//! Two generator families, both fully deterministic given a root seed:
//!
//! * **Videos** with planted shots and transitions (hard cuts, fades through
//!   black, black runs). The planted boundary list is the oracle for the
//!   shot detector; constant-color stretches double as a false-positive
//!   probe.
//! * **Clip features** with a planted genre signal: signal clips are
//!   `P·y + σ·ε` for a fixed random prototype matrix `P` and the trailer's
//!   genre indicator `y`; distractor clips are pure noise. A variant keyed
//!   to a partitioning strategy corrupts exactly the clips that straddle a
//!   shot boundary, which only the shot-blind strategy produces.
//!
//! Randomness is drawn from named streams (`synth/labels`,
//! `synth/video/{id}`, …) derived from the root seed, so corpora are
//! byte-identical across reruns and independent of generation order.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dvtf::FeatureSequence;
use crate::error::{Error, Result};
use crate::genres::{GenreSet, GENRE_COUNT};
use crate::manifest::TrailerRecord;
use crate::seed::rng_for;
use crate::segment::{Shot, Strategy};
use crate::video::{Frame, Video};

// ---------------------------------------------------------------------------
// Video synthesis
// ---------------------------------------------------------------------------

/// How one shot hands over to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Instantaneous cut; nothing inserted.
    Cut,
    /// Luminance ramps linearly to black and back over `len` inserted frames.
    Fade { len: usize },
    /// `len` pure-black frames inserted.
    Black { len: usize },
}

/// One planned shot: its content length, color, and the transition that
/// follows it (`None` on the final shot).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedShot {
    pub len: usize,
    pub color: [u8; 3],
    pub exit: Option<Transition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSynthSpec {
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    /// Inclusive range of shots per video.
    pub shot_count: (usize, usize),
    /// Inclusive range of content frames per shot.
    pub shot_len: (usize, usize),
    /// Transition mix; weights need not sum to 1.
    pub cut_weight: f64,
    pub fade_weight: f64,
    pub black_weight: f64,
    pub fade_len: usize,
    pub black_len: usize,
}

impl Default for VideoSynthSpec {
    fn default() -> Self {
        VideoSynthSpec {
            width: 48,
            height: 27,
            fps: 24,
            shot_count: (4, 10),
            shot_len: (10, 80),
            cut_weight: 0.7,
            fade_weight: 0.15,
            black_weight: 0.15,
            fade_len: 6,
            black_len: 6,
        }
    }
}

impl VideoSynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.fps == 0 {
            return Err(Error::validation("video dimensions and fps must be positive"));
        }
        if self.shot_count.0 == 0 || self.shot_count.0 > self.shot_count.1 {
            return Err(Error::validation(format!(
                "bad shot count range {:?}",
                self.shot_count
            )));
        }
        if self.shot_len.0 == 0 || self.shot_len.0 > self.shot_len.1 {
            return Err(Error::validation(format!("bad shot length range {:?}", self.shot_len)));
        }
        let weights = [self.cut_weight, self.fade_weight, self.black_weight];
        if weights.iter().any(|&w| w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::validation("transition weights must be non-negative, sum > 0"));
        }
        if self.fade_len < 2 || self.black_len == 0 {
            return Err(Error::validation("transition lengths too short"));
        }
        Ok(())
    }
}

/// What `synth_video` hands back: the frames plus every piece of planted
/// truth a test might score against.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub video: Video,
    /// Ground-truth shots. Transition frames belong to the *preceding*
    /// shot, matching the detector's convention of placing a boundary at
    /// the end of a black run.
    pub shots: Vec<Shot>,
    /// Frame indices of planted hard cuts (each is some shot's start).
    pub hard_cuts: Vec<usize>,
    /// Half-open ranges of constant-color frames; no boundary may fall
    /// strictly inside one.
    pub constant_runs: Vec<(usize, usize)>,
}

/// Colors are drawn on a 16-bin-per-channel lattice, offset to bin centers,
/// skipping the darkest bins so content frames never read as black.
/// Consecutive shots differ in every channel's bin, which keeps the
/// histogram distance at its maximum for a hard cut.
fn pick_color<R: Rng + ?Sized>(rng: &mut R, prev: Option<[u8; 3]>) -> [u8; 3] {
    loop {
        let mut color = [0u8; 3];
        for c in &mut color {
            let bin = rng.gen_range(4..16u32);
            *c = (bin * 16 + 8) as u8;
        }
        match prev {
            Some(p) if (0..3).any(|i| color[i] / 16 == p[i] / 16) => continue,
            _ => return color,
        }
    }
}

/// Draw a random shot plan from the spec's distributions.
pub fn plan_video<R: Rng + ?Sized>(spec: &VideoSynthSpec, rng: &mut R) -> Result<Vec<PlannedShot>> {
    spec.validate()?;
    let n_shots = rng.gen_range(spec.shot_count.0..=spec.shot_count.1);
    let total_weight = spec.cut_weight + spec.fade_weight + spec.black_weight;
    let mut plan = Vec::with_capacity(n_shots);
    let mut prev_color: Option<[u8; 3]> = None;
    for i in 0..n_shots {
        let len = rng.gen_range(spec.shot_len.0..=spec.shot_len.1);
        let color = pick_color(rng, prev_color);
        prev_color = Some(color);
        let exit = if i + 1 == n_shots {
            None
        } else {
            let roll = rng.gen_range(0.0..total_weight);
            Some(if roll < spec.cut_weight {
                Transition::Cut
            } else if roll < spec.cut_weight + spec.fade_weight {
                Transition::Fade { len: spec.fade_len }
            } else {
                Transition::Black { len: spec.black_len }
            })
        };
        plan.push(PlannedShot { len, color, exit });
    }
    Ok(plan)
}

fn scaled(color: [u8; 3], factor: f64) -> [u8; 3] {
    [
        (f64::from(color[0]) * factor).round() as u8,
        (f64::from(color[1]) * factor).round() as u8,
        (f64::from(color[2]) * factor).round() as u8,
    ]
}

/// Rasterize a plan. Deterministic; all randomness lives in `plan_video`.
pub fn render_video(spec: &VideoSynthSpec, plan: &[PlannedShot]) -> Result<SynthVideo> {
    spec.validate()?;
    if plan.is_empty() {
        return Err(Error::validation("empty shot plan"));
    }
    let (w, h) = (spec.width, spec.height);
    let mut frames: Vec<Frame> = Vec::new();
    let mut shots: Vec<Shot> = Vec::new();
    let mut hard_cuts: Vec<usize> = Vec::new();
    let mut constant_runs: Vec<(usize, usize)> = Vec::new();

    for (i, shot) in plan.iter().enumerate() {
        let shot_start = frames.len();
        for _ in 0..shot.len {
            frames.push(Frame::solid(w, h, shot.color));
        }
        constant_runs.push((shot_start, frames.len()));

        match shot.exit {
            None => {}
            Some(Transition::Cut) => {
                hard_cuts.push(frames.len());
            }
            Some(Transition::Fade { len }) => {
                // Ramp down to black (inclusive), then part-way back up;
                // the next shot supplies the full-intensity frame.
                let down = len.div_ceil(2);
                let up = len - down;
                for step in 1..=down {
                    let factor = 1.0 - step as f64 / down as f64;
                    frames.push(Frame::solid(w, h, scaled(shot.color, factor)));
                }
                let next = plan[i + 1].color;
                for step in 1..=up {
                    let factor = step as f64 / (up + 1) as f64;
                    frames.push(Frame::solid(w, h, scaled(next, factor)));
                }
            }
            Some(Transition::Black { len }) => {
                for _ in 0..len {
                    frames.push(Frame::black(w, h));
                }
            }
        }
        shots.push(Shot::new(shot_start, frames.len()));
    }

    Ok(SynthVideo {
        video: Video::new(spec.fps, frames)?,
        shots,
        hard_cuts,
        constant_runs,
    })
}

/// Plan and rasterize one video.
pub fn synth_video<R: Rng + ?Sized>(spec: &VideoSynthSpec, rng: &mut R) -> Result<SynthVideo> {
    let plan = plan_video(spec, rng)?;
    render_video(spec, &plan)
}

/// A reproducible corpus: video `i` is drawn from the stream
/// `synth/video/{i}` regardless of how many others are generated.
pub fn synth_video_corpus(
    spec: &VideoSynthSpec,
    n_videos: usize,
    root_seed: u64,
) -> Result<Vec<SynthVideo>> {
    if n_videos == 0 {
        return Err(Error::validation("corpus needs at least one video"));
    }
    (0..n_videos)
        .map(|i| {
            let mut rng = rng_for(root_seed, &format!("synth/video/{i}"));
            synth_video(spec, &mut rng)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Label sampling
// ---------------------------------------------------------------------------

/// Per-genre draw weights, skewed like a real trailer corpus (drama and
/// comedy common, fantasy rare).
const GENRE_WEIGHTS: [f64; GENRE_COUNT] =
    [0.20, 0.12, 0.25, 0.10, 0.35, 0.06, 0.08, 0.10, 0.07, 0.18];

/// Labels-per-example distribution: 1..=4 with mean exactly 2.5.
const CARDINALITY_WEIGHTS: [f64; 4] = [0.15, 0.35, 0.35, 0.15];

/// Draw one multi-label genre set.
pub fn sample_genre_set<R: Rng + ?Sized>(rng: &mut R) -> GenreSet {
    let roll = rng.gen_range(0.0..1.0);
    let mut k = CARDINALITY_WEIGHTS.len();
    let mut acc = 0.0;
    for (i, w) in CARDINALITY_WEIGHTS.iter().enumerate() {
        acc += w;
        if roll < acc {
            k = i + 1;
            break;
        }
    }
    let total: f64 = GENRE_WEIGHTS.iter().sum();
    let mut set = GenreSet::empty();
    while set.len() < k {
        let mut roll = rng.gen_range(0.0..total);
        let mut g = GENRE_COUNT - 1;
        for (i, w) in GENRE_WEIGHTS.iter().enumerate() {
            if roll < *w {
                g = i;
                break;
            }
            roll -= w;
        }
        set.insert(g);
    }
    set
}

/// Draw `n` genre sets with Trailers12k-like cardinality (≈2.5) and skew.
pub fn sample_genre_sets<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<GenreSet> {
    (0..n).map(|_| sample_genre_set(rng)).collect()
}

// ---------------------------------------------------------------------------
// Feature synthesis
// ---------------------------------------------------------------------------

/// Fixed random prototype matrix, one column per genre. Standard normal
/// entries: signal clips are sums of 1–4 columns, so their scale is
/// comparable to the unit-variance distractor noise.
pub fn prototype_matrix<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((width, GENRE_COUNT), |_| StandardNormal.sample(rng))
}

fn signal_row<R: Rng + ?Sized>(
    prototypes: &Array2<f64>,
    genres: GenreSet,
    sigma: f64,
    rng: &mut R,
) -> Array1<f64> {
    let y = Array1::from_iter(genres.indicator());
    let mut row = prototypes.dot(&y);
    for v in row.iter_mut() {
        let noise: f64 = StandardNormal.sample(rng);
        *v += sigma * noise;
    }
    row
}

fn noise_row<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_fn(width, |_| StandardNormal.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSynthSpec {
    pub n_trailers: usize,
    /// Feature width `b`.
    pub width: usize,
    /// Inclusive range of clips per trailer.
    pub clips: (usize, usize),
    /// Noise scale on signal clips.
    pub sigma: f64,
    /// Fraction of clips that are pure noise.
    pub distractor_fraction: f64,
    /// Backbone tag written to the feature files; also salts the prototype
    /// matrix, so two backbones are two independent views of the labels.
    pub backbone: String,
    /// Nominal clip length, only used for manifest bookkeeping.
    pub frames_per_clip: usize,
    pub fps: f64,
}

impl Default for FeatureSynthSpec {
    fn default() -> Self {
        FeatureSynthSpec {
            n_trailers: 600,
            width: 64,
            clips: (12, 48),
            sigma: 0.3,
            distractor_fraction: 0.2,
            backbone: "synth-a".to_string(),
            frames_per_clip: 24,
            fps: 24.0,
        }
    }
}

impl FeatureSynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trailers == 0 || self.width == 0 || self.frames_per_clip == 0 {
            return Err(Error::validation("counts and widths must be positive"));
        }
        if self.clips.0 == 0 || self.clips.0 > self.clips.1 {
            return Err(Error::validation(format!("bad clips range {:?}", self.clips)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation("sigma must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.distractor_fraction) {
            return Err(Error::validation("distractor fraction must be in [0, 1]"));
        }
        if self.backbone.is_empty() {
            return Err(Error::validation("backbone tag is empty"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::validation("fps must be positive"));
        }
        Ok(())
    }
}

fn trailer_id(i: usize) -> String {
    format!("t{i:04}")
}

/// The prototype matrix a corpus was generated with (needed by the
/// closed-form probe tests; everything else treats features as opaque).
pub fn corpus_prototypes(spec_width: usize, backbone: &str, root_seed: u64) -> Array2<f64> {
    let mut rng = rng_for(root_seed, &format!("synth/prototypes/{backbone}"));
    prototype_matrix(spec_width, &mut rng)
}

/// Generate a feature corpus with a planted genre signal. Returns one
/// manifest record plus feature sequence per trailer; `feature_path` is the
/// bare file name `{id}.dvtf`.
pub fn synth_features(
    spec: &FeatureSynthSpec,
    root_seed: u64,
) -> Result<Vec<(TrailerRecord, FeatureSequence)>> {
    spec.validate()?;
    let mut label_rng = rng_for(root_seed, "synth/labels");
    let labels = sample_genre_sets(spec.n_trailers, &mut label_rng);
    let prototypes = corpus_prototypes(spec.width, &spec.backbone, root_seed);

    let mut out = Vec::with_capacity(spec.n_trailers);
    for (i, &genres) in labels.iter().enumerate() {
        let id = trailer_id(i);
        // Clip counts come from their own stream so that two backbones over
        // the same seed stay row-aligned (a fusion requirement); only the
        // feature values are salted by the backbone tag.
        let n_clips = rng_for(root_seed, &format!("synth/clips/{id}"))
            .gen_range(spec.clips.0..=spec.clips.1);
        let mut rng = rng_for(root_seed, &format!("synth/features/{}/{id}", spec.backbone));
        let mut rows = Array2::<f32>::zeros((n_clips, spec.width));
        for j in 0..n_clips {
            let row = if rng.gen_range(0.0..1.0) < spec.distractor_fraction {
                noise_row(spec.width, &mut rng)
            } else {
                signal_row(&prototypes, genres, spec.sigma, &mut rng)
            };
            for (dst, &src) in rows.row_mut(j).iter_mut().zip(row.iter()) {
                *dst = src as f32;
            }
        }
        let record = TrailerRecord {
            id: id.clone(),
            feature_path: Some(format!("{id}.dvtf")),
            video_path: None,
            genres,
            fps: spec.fps,
            duration_frames: (n_clips * spec.frames_per_clip) as u64,
        };
        out.push((record, FeatureSequence::new(spec.backbone.clone(), rows)?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Strategy-keyed feature synthesis (boundary-straddle corruption)
// ---------------------------------------------------------------------------

/// Spec for the strategy comparison corpus: per-trailer shot structures are
/// planted, and under shot-blind partitioning any clip window that spans a
/// shot boundary yields a pure-noise feature (the "smeared" clip a real
/// backbone would produce). Shot-aware windows never straddle, so the same
/// trailers give cleaner sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCorpusSpec {
    pub n_trailers: usize,
    pub width: usize,
    pub sigma: f64,
    pub shot_count: (usize, usize),
    /// Content frames per shot (at the nominal fps).
    pub shot_len: (usize, usize),
    pub backbone: String,
    pub fps: f64,
}

impl Default for SweepCorpusSpec {
    fn default() -> Self {
        SweepCorpusSpec {
            n_trailers: 120,
            width: 64,
            sigma: 0.3,
            shot_count: (6, 12),
            shot_len: (20, 90),
            backbone: "synth-a".to_string(),
            fps: 24.0,
        }
    }
}

impl SweepCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trailers == 0 || self.width == 0 {
            return Err(Error::validation("counts and widths must be positive"));
        }
        if self.shot_count.0 == 0 || self.shot_count.0 > self.shot_count.1 {
            return Err(Error::validation(format!("bad shot count range {:?}", self.shot_count)));
        }
        if self.shot_len.0 == 0 || self.shot_len.0 > self.shot_len.1 {
            return Err(Error::validation(format!("bad shot length range {:?}", self.shot_len)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation("sigma must be finite and non-negative"));
        }
        if self.backbone.is_empty() {
            return Err(Error::validation("backbone tag is empty"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::validation("fps must be positive"));
        }
        Ok(())
    }
}

/// For shot-blind windows of `f` frames over the concatenated shots: does
/// window `j` span a shot boundary?
pub fn seq_straddle_flags(shot_lens: &[usize], f: usize) -> Vec<bool> {
    let total: usize = shot_lens.iter().sum();
    let boundaries: Vec<usize> = shot_lens
        .iter()
        .scan(0usize, |acc, &len| {
            *acc += len;
            Some(*acc)
        })
        .take(shot_lens.len().saturating_sub(1))
        .collect();
    (0..total.div_ceil(f))
        .map(|j| {
            let start = j * f;
            let end = ((j + 1) * f).min(total);
            boundaries.iter().any(|&b| b > start && b < end)
        })
        .collect()
}

/// Clip count under each strategy for one planted shot structure.
fn clip_count(shot_lens: &[usize], strategy: Strategy) -> usize {
    match strategy {
        Strategy::Shot { f } => shot_lens.iter().map(|&l| l.div_ceil(f)).sum(),
        Strategy::Seq { f } => shot_lens.iter().sum::<usize>().div_ceil(f),
    }
}

/// Generate the strategy-keyed corpus. Labels and shot structures depend
/// only on the seed, so every strategy sees the same trailers; the feature
/// rows differ where the strategy's windows straddle a planted boundary.
pub fn synth_strategy_features(
    spec: &SweepCorpusSpec,
    strategy: Strategy,
    root_seed: u64,
) -> Result<Vec<(TrailerRecord, FeatureSequence)>> {
    spec.validate()?;
    let mut label_rng = rng_for(root_seed, "synth/labels");
    let labels = sample_genre_sets(spec.n_trailers, &mut label_rng);
    let prototypes = corpus_prototypes(spec.width, &spec.backbone, root_seed);
    let f = strategy.f();

    let mut out = Vec::with_capacity(spec.n_trailers);
    for (i, &genres) in labels.iter().enumerate() {
        let id = trailer_id(i);
        let mut shot_rng = rng_for(root_seed, &format!("synth/shots/{id}"));
        let n_shots = shot_rng.gen_range(spec.shot_count.0..=spec.shot_count.1);
        let shot_lens: Vec<usize> =
            (0..n_shots).map(|_| shot_rng.gen_range(spec.shot_len.0..=spec.shot_len.1)).collect();
        let total_frames: usize = shot_lens.iter().sum();

        let straddles = match strategy {
            Strategy::Seq { .. } => seq_straddle_flags(&shot_lens, f),
            Strategy::Shot { .. } => vec![false; clip_count(&shot_lens, strategy)],
        };
        let n_clips = straddles.len();
        debug_assert_eq!(n_clips, clip_count(&shot_lens, strategy));

        let mut rng =
            rng_for(root_seed, &format!("synth/sweep/{}/{id}/{strategy}", spec.backbone));
        let mut rows = Array2::<f32>::zeros((n_clips, spec.width));
        for (j, &straddle) in straddles.iter().enumerate() {
            let row = if straddle {
                noise_row(spec.width, &mut rng)
            } else {
                signal_row(&prototypes, genres, spec.sigma, &mut rng)
            };
            for (dst, &src) in rows.row_mut(j).iter_mut().zip(row.iter()) {
                *dst = src as f32;
            }
        }
        let record = TrailerRecord {
            id: id.clone(),
            feature_path: Some(format!("{id}.dvtf")),
            video_path: None,
            genres,
            fps: spec.fps,
            duration_frames: total_frames as u64,
        };
        out.push((record, FeatureSequence::new(spec.backbone.clone(), rows)?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Corpus writers
// ---------------------------------------------------------------------------

/// Write a feature corpus to `dir` (one `.dvtf` per trailer plus
/// `manifest.jsonl`). Returns the manifest path.
pub fn write_feature_corpus(
    dir: &std::path::Path,
    corpus: &[(TrailerRecord, FeatureSequence)],
) -> Result<std::path::PathBuf> {
    if corpus.is_empty() {
        return Err(Error::validation("empty corpus"));
    }
    std::fs::create_dir_all(dir)?;
    for (record, features) in corpus {
        let name = record
            .feature_path
            .as_deref()
            .ok_or_else(|| Error::validation(format!("record {:?} has no feature path", record.id)))?;
        crate::dvtf::write_features(&dir.join(name), features)?;
    }
    let manifest_path = dir.join("manifest.jsonl");
    let records: Vec<TrailerRecord> = corpus.iter().map(|(r, _)| r.clone()).collect();
    crate::manifest::write_manifest(&manifest_path, &records)?;
    Ok(manifest_path)
}

/// Write a video corpus to `dir`: one `.dvtv` per video, the ground-truth
/// boundary CSV, and a manifest. Returns the manifest path.
pub fn write_video_corpus(
    dir: &std::path::Path,
    spec: &VideoSynthSpec,
    n_videos: usize,
    root_seed: u64,
) -> Result<std::path::PathBuf> {
    let corpus = synth_video_corpus(spec, n_videos, root_seed)?;
    let mut label_rng = rng_for(root_seed, "synth/labels");
    let labels = sample_genre_sets(n_videos, &mut label_rng);
    std::fs::create_dir_all(dir)?;

    let mut records = Vec::with_capacity(n_videos);
    let mut boundaries: indexmap::IndexMap<String, Vec<Shot>> = indexmap::IndexMap::new();
    for (i, sv) in corpus.iter().enumerate() {
        let id = trailer_id(i);
        let name = format!("{id}.dvtv");
        crate::video::write_video(&dir.join(&name), &sv.video)?;
        records.push(TrailerRecord {
            id: id.clone(),
            feature_path: None,
            video_path: Some(name),
            genres: labels[i],
            fps: f64::from(sv.video.fps),
            duration_frames: sv.video.len() as u64,
        });
        boundaries.insert(id, sv.shots.clone());
    }
    crate::segment::write_boundaries(&dir.join("boundaries.csv"), &boundaries)?;
    let manifest_path = dir.join("manifest.jsonl");
    crate::manifest::write_manifest(&manifest_path, &records)?;
    Ok(manifest_path)
}
