//! Shot segmentation and clip partitioning.
//!
//! A trailer is first cut into shots, either by the built-in color-histogram
//! detector or by importing boundaries produced by an external tool. Each
//! shot is then partitioned into fixed-length clips of `f` frames, the last
//! clip right-padded with black frames. `Seq` partitioning is the shot-blind
//! baseline: contiguous `f`-frame blocks over the whole trailer.
//!
//! The detector compares per-channel color histograms of consecutive frames
//! (normalized L1 distance in [0, 2]) and treats runs of near-black frames as
//! transitions: a black run is absorbed into the preceding shot — mirroring
//! the black padding clips receive — rather than emitted as a shot of its
//! own. Shots shorter than a minimum length are merged into their
//! predecessor.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::video::Frame;

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shot {
    pub start: usize,
    pub end: usize,
}

impl Shot {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Shot { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A fixed-length block of frames cut from one shot (or from the raw
/// trailer under `Seq` partitioning), right-padded with black frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    /// Index of the originating shot; `None` under shot-blind partitioning.
    pub source_shot: Option<usize>,
    /// Number of trailing black padding frames.
    pub pad_count: usize,
    /// Frame index of the clip's first frame within the trailer.
    pub start_frame: usize,
}

impl Clip {
    /// Clip length `f`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn content_frames(&self) -> &[Frame] {
        &self.frames[..self.frames.len() - self.pad_count]
    }
}

/// Shot detector configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Histogram bins per color channel.
    pub bins: usize,
    /// Boundary when consecutive-frame histogram distance exceeds this.
    pub cut_threshold: f64,
    /// Frames with mean luma below this count as black (transition) frames.
    pub black_threshold: f64,
    /// Shots shorter than this are merged into the preceding shot.
    pub min_shot_len: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            bins: 16,
            cut_threshold: 0.4,
            black_threshold: 20.0 / 255.0,
            min_shot_len: 6,
        }
    }
}

impl DetectorConfig {
    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = bins;
        self
    }

    pub fn with_cut_threshold(mut self, t: f64) -> Self {
        self.cut_threshold = t;
        self
    }

    pub fn with_black_threshold(mut self, t: f64) -> Self {
        self.black_threshold = t;
        self
    }

    pub fn with_min_shot_len(mut self, n: usize) -> Self {
        self.min_shot_len = n;
        self
    }
}

/// Concatenated per-channel histograms (R, G, B), each block summing to 1.
pub fn frame_histogram(frame: &Frame, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || bins > 256 {
        return Err(Error::validation(format!("bins must be in 1..=256, got {bins}")));
    }
    let n_px = frame.rgb.len() / 3;
    if n_px == 0 {
        return Err(Error::validation("cannot histogram an empty frame"));
    }
    let mut hist = vec![0.0f64; 3 * bins];
    for px in frame.rgb.chunks_exact(3) {
        for (c, &v) in px.iter().enumerate() {
            let bin = (v as usize * bins) / 256;
            hist[c * bins + bin] += 1.0;
        }
    }
    for v in &mut hist {
        *v /= n_px as f64;
    }
    Ok(hist)
}

/// Mean per-channel L1 distance between two frame histograms, in [0, 2].
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    l1 / 3.0
}

/// Detect shot boundaries in a frame sequence.
///
/// Returns shots that partition `[0, frames.len())` exactly. A constant
/// video yields a single shot.
pub fn detect_shots(frames: &[Frame], config: &DetectorConfig) -> Result<Vec<Shot>> {
    if frames.is_empty() {
        return Err(Error::validation("cannot segment an empty frame sequence"));
    }
    let l = frames.len();

    let black: Vec<bool> = frames.iter().map(|f| f.mean_luma() < config.black_threshold).collect();
    let hists: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| frame_histogram(f, config.bins))
        .collect::<Result<_>>()?;

    // Candidate boundaries from consecutive-frame histogram jumps.
    let mut candidates: HashSet<usize> = (1..l)
        .filter(|&j| histogram_distance(&hists[j - 1], &hists[j]) > config.cut_threshold)
        .collect();

    // Absorb black runs: the run joins the preceding shot and contributes a
    // single boundary at its end. Runs touching the ends of the video join
    // the adjacent content shot instead of forming one of their own.
    let mut j = 0;
    while j < l {
        if !black[j] {
            j += 1;
            continue;
        }
        let run_start = j;
        while j < l && black[j] {
            j += 1;
        }
        let run_end = j; // black frames occupy [run_start, run_end)
        if run_start == 0 && run_end == l {
            candidates.clear();
        } else if run_start == 0 {
            candidates.retain(|&c| c > run_end);
        } else if run_end == l {
            candidates.retain(|&c| c < run_start);
        } else {
            candidates.retain(|&c| c < run_start || c > run_end);
            candidates.insert(run_end);
        }
    }

    let mut cuts: Vec<usize> = candidates.into_iter().collect();
    cuts.sort_unstable();

    let mut shots = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for cut in cuts {
        shots.push(Shot::new(start, cut));
        start = cut;
    }
    shots.push(Shot::new(start, l));

    Ok(merge_short_shots(shots, config.min_shot_len))
}

fn merge_short_shots(shots: Vec<Shot>, min_len: usize) -> Vec<Shot> {
    let mut merged: Vec<Shot> = Vec::with_capacity(shots.len());
    for shot in shots {
        match merged.last_mut() {
            Some(prev) if shot.len() < min_len => prev.end = shot.end,
            _ => merged.push(shot),
        }
    }
    // The first shot has no predecessor; fold it forward if it is short.
    if merged.len() > 1 && merged[0].len() < min_len {
        merged[1].start = merged[0].start;
        merged.remove(0);
    }
    merged
}

/// Check that `shots` partition `[0, duration)` exactly.
pub fn validate_shots(shots: &[Shot], duration: usize) -> Result<()> {
    if shots.is_empty() {
        return Err(Error::validation("empty shot list"));
    }
    if shots[0].start != 0 {
        return Err(Error::validation(format!("first shot starts at {}, not 0", shots[0].start)));
    }
    for w in shots.windows(2) {
        if w[0].end != w[1].start {
            return Err(Error::validation(format!(
                "gap or overlap between shots ending {} and starting {}",
                w[0].end, w[1].start
            )));
        }
    }
    for s in shots {
        if s.is_empty() {
            return Err(Error::validation(format!("empty shot [{}, {})", s.start, s.end)));
        }
    }
    let last = shots.last().expect("non-empty");
    if last.end != duration {
        return Err(Error::validation(format!(
            "shots end at {}, expected duration {duration}",
            last.end
        )));
    }
    Ok(())
}

const BOUNDARY_HEADER: &str = "trailer_id,start_frame,end_frame";

/// Parse a boundary CSV (`trailer_id,start_frame,end_frame`, end exclusive).
///
/// Rows for one trailer must be in order and contiguous from frame 0;
/// overlaps and gaps are rejected with line numbers. Durations are not known
/// here — see [`import_boundaries_checked`] for the range check.
pub fn parse_boundary_csv(text: &str) -> Result<IndexMap<String, Vec<Shot>>> {
    let mut map: IndexMap<String, Vec<Shot>> = IndexMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || (lineno == 1 && line == BOUNDARY_HEADER) {
            continue;
        }
        let mut parts = line.split(',');
        let (id, start, end) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(s), Some(e), None) => (id, s, e),
            _ => return Err(Error::parse(lineno, "expected trailer_id,start_frame,end_frame")),
        };
        let start: usize = start
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad start_frame {start:?}")))?;
        let end: usize = end
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad end_frame {end:?}")))?;
        if end <= start {
            return Err(Error::parse(lineno, format!("empty or inverted shot [{start}, {end})")));
        }
        let shots = map.entry(id.to_string()).or_default();
        let expected = shots.last().map_or(0, |s| s.end);
        if start != expected {
            return Err(Error::parse(
                lineno,
                format!("shot starts at {start} but previous coverage ends at {expected} (gap or overlap)"),
            ));
        }
        shots.push(Shot::new(start, end));
    }
    if map.is_empty() {
        return Err(Error::validation("boundary file contains no rows"));
    }
    Ok(map)
}

pub fn import_boundaries(path: &Path) -> Result<IndexMap<String, Vec<Shot>>> {
    parse_boundary_csv(&fs::read_to_string(path)?)
}

/// Import boundaries and verify each trailer covers exactly its duration.
pub fn import_boundaries_checked(
    path: &Path,
    durations: &IndexMap<String, usize>,
) -> Result<IndexMap<String, Vec<Shot>>> {
    let map = import_boundaries(path)?;
    for (id, shots) in &map {
        let duration = durations
            .get(id)
            .ok_or_else(|| Error::validation(format!("boundary file names unknown trailer {id:?}")))?;
        validate_shots(shots, *duration)
            .map_err(|e| Error::validation(format!("trailer {id:?}: {e}")))?;
    }
    Ok(map)
}

pub fn boundaries_to_csv(map: &IndexMap<String, Vec<Shot>>) -> String {
    let mut out = String::from(BOUNDARY_HEADER);
    out.push('\n');
    for (id, shots) in map {
        for s in shots {
            out.push_str(&format!("{id},{},{}\n", s.start, s.end));
        }
    }
    out
}

pub fn write_boundaries(path: &Path, map: &IndexMap<String, Vec<Shot>>) -> Result<()> {
    fs::write(path, boundaries_to_csv(map))?;
    Ok(())
}

/// Cut one shot's frames into `⌈len/f⌉` clips of exactly `f` frames, the
/// last right-padded with black frames.
pub fn partition_shot(frames: &[Frame], f: usize, source_shot: Option<usize>, start_frame: usize) -> Result<Vec<Clip>> {
    if f == 0 {
        return Err(Error::validation("clip length f must be positive"));
    }
    if frames.is_empty() {
        return Err(Error::validation("cannot partition an empty shot"));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    let mut clips = Vec::with_capacity(frames.len().div_ceil(f));
    for (i, chunk) in frames.chunks(f).enumerate() {
        let pad_count = f - chunk.len();
        let mut clip_frames = chunk.to_vec();
        clip_frames.extend(std::iter::repeat_with(|| Frame::black(w, h)).take(pad_count));
        clips.push(Clip {
            frames: clip_frames,
            source_shot,
            pad_count,
            start_frame: start_frame + i * f,
        });
    }
    Ok(clips)
}

/// Shot-aware clip sequence: each shot partitioned independently, clips
/// concatenated in shot order. Clip count is `Σ_i ⌈len_i / f⌉`.
pub fn build_clip_sequence(frames: &[Frame], shots: &[Shot], f: usize) -> Result<Vec<Clip>> {
    validate_shots(shots, frames.len())?;
    let mut clips = Vec::new();
    for (i, shot) in shots.iter().enumerate() {
        clips.extend(partition_shot(&frames[shot.start..shot.end], f, Some(i), shot.start)?);
    }
    Ok(clips)
}

/// Shot-blind baseline: contiguous `f`-frame blocks over the whole trailer,
/// last block padded. Clip count is `⌈l / f⌉`.
pub fn seq_partition(frames: &[Frame], f: usize) -> Result<Vec<Clip>> {
    partition_shot(frames, f, None, 0)
}

/// Clip partitioning strategy named like `shot-24` or `seq-32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Shot-aware: segment first, partition each shot.
    Shot { f: usize },
    /// Shot-blind contiguous blocks.
    Seq { f: usize },
}

impl Strategy {
    pub fn f(&self) -> usize {
        match *self {
            Strategy::Shot { f } | Strategy::Seq { f } => f,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (kind, f) = s
            .split_once('-')
            .ok_or_else(|| Error::validation(format!("bad strategy {s:?}, expected e.g. shot-24")))?;
        let f: usize = f
            .parse()
            .map_err(|_| Error::validation(format!("bad clip length in strategy {s:?}")))?;
        if f == 0 {
            return Err(Error::validation("strategy clip length must be positive"));
        }
        match kind {
            "shot" => Ok(Strategy::Shot { f }),
            "seq" => Ok(Strategy::Seq { f }),
            _ => Err(Error::validation(format!("unknown strategy kind {kind:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f_: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Strategy::Shot { f } => write!(f_, "shot-{f}"),
            Strategy::Seq { f } => write!(f_, "seq-{f}"),
        }
    }
}

/// Apply `strategy` to a trailer. `shots` is only consulted for `Shot`.
pub fn partition_with_strategy(frames: &[Frame], shots: &[Shot], strategy: Strategy) -> Result<Vec<Clip>> {
    match strategy {
        Strategy::Shot { f } => build_clip_sequence(frames, shots, f),
        Strategy::Seq { f } => seq_partition(frames, f),
    }
}

/// Indices kept when downsampling `n` frames from `src_fps` to `dst_fps`:
/// every frame whose index is divisible by `src_fps / dst_fps`.
pub fn downsample_indices(n: usize, src_fps: u32, dst_fps: u32) -> Result<Vec<usize>> {
    if src_fps == 0 || dst_fps == 0 {
        return Err(Error::validation("frame rates must be positive"));
    }
    if !src_fps.is_multiple_of(dst_fps) {
        return Err(Error::validation(format!(
            "source fps {src_fps} is not an integer multiple of target fps {dst_fps}"
        )));
    }
    let step = (src_fps / dst_fps) as usize;
    Ok((0..n).step_by(step).collect())
}

/// Downsample a frame sequence by keeping every `(src/dst)`-th frame.
pub fn downsample_fps(frames: &[Frame], src_fps: u32, dst_fps: u32) -> Result<Vec<Frame>> {
    let idx = downsample_indices(frames.len(), src_fps, dst_fps)?;
    Ok(idx.into_iter().map(|i| frames[i].clone()).collect())
}

/// Pick the clip's key frame: the non-pad frame whose histogram is closest
/// (L1) to the mean histogram of the clip's non-pad frames. Ties resolve to
/// the lowest index. An all-pad clip has no key frame.
pub fn select_keyframe(clip: &Clip, bins: usize) -> Result<usize> {
    let content = clip.content_frames();
    if content.is_empty() {
        return Err(Error::validation("clip has no content frames to pick a key frame from"));
    }
    let hists: Vec<Vec<f64>> = content
        .iter()
        .map(|f| frame_histogram(f, bins))
        .collect::<Result<_>>()?;
    let dim = hists[0].len();
    let mut mean = vec![0.0f64; dim];
    for h in &hists {
        for (m, v) in mean.iter_mut().zip(h) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= hists.len() as f64;
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, h) in hists.iter().enumerate() {
        let d: f64 = h.iter().zip(&mean).map(|(x, y)| (x - y).abs()).sum();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    Ok(best)
}
