//! Trailer-level inference and ranking metrics.
//!
//! All four reported metrics reduce to average precision (area under the
//! step-wise precision–recall curve) over different poolings of the
//! (trailer, genre) score matrix: micro flattens everything into one binary
//! task, macro averages per-genre APs, weighted scales them by genre
//! frequency, and sample averages per-trailer APs. Fold summaries report
//! mean ± population standard deviation, scaled ×100.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::aggregate::{fuse_logits, AggregatorModel};
use crate::error::{Error, Result};
use crate::genres::{GenreSet, GENRES, GENRE_COUNT};
use crate::snippet::{enumerate_inference_snippets, gather_rows};

/// One trailer's predicted genre probabilities next to its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailerPrediction {
    pub id: String,
    pub probs: Array1<f64>,
    pub truth: GenreSet,
}

impl TrailerPrediction {
    pub fn new(id: impl Into<String>, probs: Array1<f64>, truth: GenreSet) -> Self {
        TrailerPrediction { id: id.into(), probs, truth }
    }
}

fn validate_predictions(preds: &[TrailerPrediction]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::validation("no predictions to evaluate"));
    }
    let mut seen = std::collections::HashSet::new();
    for p in preds {
        if p.probs.len() != GENRE_COUNT {
            return Err(Error::validation(format!(
                "prediction {:?} has {} scores, expected {GENRE_COUNT}",
                p.id,
                p.probs.len()
            )));
        }
        if p.probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("prediction {:?} has a non-finite score", p.id)));
        }
        if !seen.insert(p.id.as_str()) {
            return Err(Error::validation(format!("duplicate prediction id {:?}", p.id)));
        }
    }
    Ok(())
}

/// Average prediction over a trailer's inference snippets.
pub fn predict_trailer(model: &AggregatorModel, features: &Array2<f64>, c: usize) -> Result<Array1<f64>> {
    let snippets = enumerate_inference_snippets(features.nrows(), c)?;
    let mut acc = Array1::zeros(GENRE_COUNT);
    for snippet in &snippets {
        let x = gather_rows(features, snippet);
        let (_, probs) = model.predict(&x)?;
        acc += &probs;
    }
    Ok(acc / snippets.len() as f64)
}

/// Two-stream prediction: per snippet, average the two models' logits
/// before the sigmoid, then average over snippets as usual. Both streams
/// must describe the same clip sequence.
pub fn predict_trailer_fused(
    model_a: &AggregatorModel,
    features_a: &Array2<f64>,
    model_b: &AggregatorModel,
    features_b: &Array2<f64>,
    c: usize,
) -> Result<Array1<f64>> {
    if features_a.nrows() != features_b.nrows() {
        return Err(Error::validation(format!(
            "fusion streams disagree on clip count: {} vs {}",
            features_a.nrows(),
            features_b.nrows()
        )));
    }
    let snippets = enumerate_inference_snippets(features_a.nrows(), c)?;
    let mut acc = Array1::zeros(GENRE_COUNT);
    for snippet in &snippets {
        let (za, _) = model_a.predict(&gather_rows(features_a, snippet))?;
        let (zb, _) = model_b.predict(&gather_rows(features_b, snippet))?;
        let fused = fuse_logits(&za, &zb)?;
        acc += &fused.mapv(|z| 1.0 / (1.0 + (-z).exp()));
    }
    Ok(acc / snippets.len() as f64)
}

/// Step-wise average precision with tie grouping: items sharing a score
/// enter the ranking together, and AP = Σ (R_n − R_{n−1}) · P_n over the
/// resulting threshold steps.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::validation("average precision of an empty ranking"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("non-finite score in ranking"));
    }
    let npos = labels.iter().filter(|&&l| l).count();
    if npos == 0 {
        return Err(Error::validation(
            "average precision undefined without a positive label",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    let mut ap = 0.0;
    let mut cum_pos = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let mut j = i;
        let mut group_pos = 0usize;
        while j < order.len() && scores[order[j]] == score {
            if labels[order[j]] {
                group_pos += 1;
            }
            j += 1;
        }
        seen += j - i;
        cum_pos += group_pos;
        let recall = cum_pos as f64 / npos as f64;
        if group_pos > 0 {
            ap += (recall - prev_recall) * (cum_pos as f64 / seen as f64);
        }
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// One point of a precision–recall curve, taken after admitting every item
/// scoring at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// The PR curve sampled at every distinct score (tie groups collapse into
/// single points, matching [`average_precision`]).
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>> {
    // Reuse the validation path.
    average_precision(scores, labels)?;
    let npos = labels.iter().filter(|&&l| l).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));

    let mut points = Vec::new();
    let mut cum_pos = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == score {
            if labels[order[j]] {
                cum_pos += 1;
            }
            j += 1;
        }
        seen += j - i;
        points.push(PrPoint {
            threshold: score,
            recall: cum_pos as f64 / npos as f64,
            precision: cum_pos as f64 / seen as f64,
        });
        i = j;
    }
    Ok(points)
}

pub fn pr_curve_to_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
    }
    out
}

/// Micro AP: every (trailer, genre) pair becomes one item of a single
/// binary ranking task.
pub fn micro_ap(preds: &[TrailerPrediction]) -> Result<f64> {
    validate_predictions(preds)?;
    let mut scores = Vec::with_capacity(preds.len() * GENRE_COUNT);
    let mut labels = Vec::with_capacity(preds.len() * GENRE_COUNT);
    for p in preds {
        let truth = p.truth.indicator();
        for (g, &t) in truth.iter().enumerate() {
            scores.push(p.probs[g]);
            labels.push(t == 1.0);
        }
    }
    average_precision(&scores, &labels)
}

/// Per-genre APs plus positive counts. Genres without a positive example
/// carry `None` and are excluded from the macro/weighted means.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreBreakdown {
    pub ap: Vec<Option<f64>>,
    pub positives: Vec<usize>,
}

impl GenreBreakdown {
    /// Names of genres excluded for lack of positives.
    pub fn excluded(&self) -> Vec<&'static str> {
        self.ap
            .iter()
            .enumerate()
            .filter(|(_, ap)| ap.is_none())
            .map(|(g, _)| GENRES[g])
            .collect()
    }
}

pub fn per_genre_ap(preds: &[TrailerPrediction]) -> Result<GenreBreakdown> {
    validate_predictions(preds)?;
    let mut ap = Vec::with_capacity(GENRE_COUNT);
    let mut positives = Vec::with_capacity(GENRE_COUNT);
    for g in 0..GENRE_COUNT {
        let scores: Vec<f64> = preds.iter().map(|p| p.probs[g]).collect();
        let labels: Vec<bool> = preds.iter().map(|p| p.truth.indicator()[g] == 1.0).collect();
        let npos = labels.iter().filter(|&&l| l).count();
        positives.push(npos);
        ap.push(if npos == 0 {
            None
        } else {
            Some(average_precision(&scores, &labels)?)
        });
    }
    Ok(GenreBreakdown { ap, positives })
}

/// Macro AP: unweighted mean of per-genre APs over genres with positives.
pub fn macro_ap(preds: &[TrailerPrediction]) -> Result<f64> {
    let breakdown = per_genre_ap(preds)?;
    let included: Vec<f64> = breakdown.ap.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::validation("no genre has a positive example"));
    }
    Ok(included.iter().sum::<f64>() / included.len() as f64)
}

/// Weighted AP: per-genre APs weighted by each genre's share of the
/// positive labels (genres without positives contribute nothing).
pub fn weighted_ap(preds: &[TrailerPrediction]) -> Result<f64> {
    let breakdown = per_genre_ap(preds)?;
    let total: usize = breakdown
        .positives
        .iter()
        .zip(&breakdown.ap)
        .filter(|(_, ap)| ap.is_some())
        .map(|(n, _)| n)
        .sum();
    if total == 0 {
        return Err(Error::validation("no genre has a positive example"));
    }
    let mut acc = 0.0;
    for g in 0..GENRE_COUNT {
        if let Some(ap) = breakdown.ap[g] {
            acc += breakdown.positives[g] as f64 / total as f64 * ap;
        }
    }
    Ok(acc)
}

/// Sample AP: per-trailer AP over its ten genre scores, averaged over
/// trailers. Trailers without any true genre are skipped.
pub fn sample_ap(preds: &[TrailerPrediction]) -> Result<f64> {
    validate_predictions(preds)?;
    let mut acc = 0.0;
    let mut counted = 0usize;
    for p in preds {
        if p.truth.is_empty() {
            continue;
        }
        let truth = p.truth.indicator();
        let scores: Vec<f64> = p.probs.iter().copied().collect();
        let labels: Vec<bool> = truth.iter().map(|&v| v == 1.0).collect();
        acc += average_precision(&scores, &labels)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::validation("every trailer has an empty label set"));
    }
    Ok(acc / counted as f64)
}

/// Mean ± population standard deviation over folds, reported ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
}

impl MetricSummary {
    /// `values` are raw metric values in [0, 1]; the summary is ×100.
    pub fn from_fold_values(values: &[f64]) -> Self {
        let per_fold: Vec<f64> = values.iter().map(|v| v * 100.0).collect();
        let n = per_fold.len() as f64;
        let mean = per_fold.iter().sum::<f64>() / n;
        let var = per_fold.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricSummary { mean, std: var.sqrt(), per_fold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreApRow {
    pub genre: String,
    /// Mean AP ×100 over the folds where the genre had positives; `None`
    /// when it never did.
    pub mean_ap: Option<f64>,
    /// Positive examples summed over folds.
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_ap: MetricSummary,
    pub macro_ap: MetricSummary,
    pub weighted_ap: MetricSummary,
    pub sample_ap: MetricSummary,
    pub per_genre: Vec<GenreApRow>,
    pub warnings: Vec<String>,
}

/// Evaluate each fold's predictions and summarize across folds.
pub fn evaluate_folds(folds: &[Vec<TrailerPrediction>]) -> Result<EvalReport> {
    if folds.is_empty() {
        return Err(Error::validation("no folds to evaluate"));
    }
    let mut micro = Vec::new();
    let mut macro_ = Vec::new();
    let mut weighted = Vec::new();
    let mut sample = Vec::new();
    let mut genre_sums = [(0.0f64, 0usize); GENRE_COUNT];
    let mut genre_pos = [0usize; GENRE_COUNT];
    let mut warnings = Vec::new();

    for (k, fold) in folds.iter().enumerate() {
        micro.push(micro_ap(fold)?);
        macro_.push(macro_ap(fold)?);
        weighted.push(weighted_ap(fold)?);
        sample.push(sample_ap(fold)?);
        let breakdown = per_genre_ap(fold)?;
        for g in 0..GENRE_COUNT {
            genre_pos[g] += breakdown.positives[g];
            if let Some(ap) = breakdown.ap[g] {
                genre_sums[g].0 += ap;
                genre_sums[g].1 += 1;
            }
        }
        for name in breakdown.excluded() {
            warnings.push(format!(
                "genre {name} has no positive example in fold {k}; excluded from macro/weighted AP"
            ));
        }
        let empty = fold.iter().filter(|p| p.truth.is_empty()).count();
        if empty > 0 {
            warnings.push(format!(
                "{empty} trailer(s) with empty label sets in fold {k}; excluded from sample AP"
            ));
        }
    }

    let per_genre = (0..GENRE_COUNT)
        .map(|g| GenreApRow {
            genre: GENRES[g].to_string(),
            mean_ap: (genre_sums[g].1 > 0)
                .then(|| genre_sums[g].0 / genre_sums[g].1 as f64 * 100.0),
            positives: genre_pos[g],
        })
        .collect();

    Ok(EvalReport {
        micro_ap: MetricSummary::from_fold_values(&micro),
        macro_ap: MetricSummary::from_fold_values(&macro_),
        weighted_ap: MetricSummary::from_fold_values(&weighted),
        sample_ap: MetricSummary::from_fold_values(&sample),
        per_genre,
        warnings,
    })
}

impl EvalReport {
    /// Human-readable rendering; machine consumers should use the JSON form.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let row = |name: &str, s: &MetricSummary| {
            let folds: Vec<String> = s.per_fold.iter().map(|v| format!("{v:.2}")).collect();
            format!("{name:<12} {:>6.2} ± {:<5.2} [{}]\n", s.mean, s.std, folds.join(", "))
        };
        out.push_str(&row("micro AP", &self.micro_ap));
        out.push_str(&row("macro AP", &self.macro_ap));
        out.push_str(&row("weighted AP", &self.weighted_ap));
        out.push_str(&row("sample AP", &self.sample_ap));
        out.push_str("\nper-genre AP (mean over folds with positives):\n");
        for r in &self.per_genre {
            match r.mean_ap {
                Some(ap) => {
                    out.push_str(&format!("  {:<16} {ap:>6.2}  ({} positives)\n", r.genre, r.positives))
                }
                None => out.push_str(&format!("  {:<16}    --  (no positives)\n", r.genre)),
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests;
