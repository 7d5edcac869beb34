//! Training loop: BCE objective, ADAM, plateau learning-rate schedule,
//! early stopping, best-checkpoint restore.
//!
//! Determinism contract: all randomness derives from `config.seed`. The
//! epoch shuffle uses one sequential stream; snippet sampling and dropout
//! use per-(epoch, trailer) streams, so batch workers can run in parallel
//! without changing any draw. Per-sample gradients are averaged in shuffled
//! batch order, which is itself deterministic.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatorModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{micro_ap, predict_trailer, TrailerPrediction};
use crate::seed::rng_for;
use crate::snippet::{gather_rows, sample_training_snippet};
use crate::tensor::{ParamStore, Tape};

/// Probabilities are clamped to `[CLAMP, 1 − CLAMP]` before logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

/// One training sample's loss together with its parameter gradients,
/// keyed by parameter name.
type SampleGrads = (f64, Vec<(String, Array2<f64>)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub plateau_patience: usize,
    /// Each plateau divides the learning rate by this factor.
    pub lr_factor: f64,
    /// Absolute val-loss improvement below this counts as no improvement
    /// for the patience counters.
    pub min_delta: f64,
    pub early_stop_patience: usize,
    /// Clips per snippet (`c`).
    pub snippet_len: usize,
    pub seed: u64,
    /// Clip-partitioning tag recorded alongside results (e.g. "shot-24");
    /// the trainer itself only sees the resulting feature sequences.
    pub strategy_tag: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: 32,
            lr0: 1e-4,
            plateau_patience: 20,
            lr_factor: 10.0,
            min_delta: 1e-5,
            early_stop_patience: 30,
            snippet_len: 30,
            seed: 0,
            strategy_tag: "shot-24".to_string(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.snippet_len == 0 {
            return Err(Error::validation("epochs, batch, and snippet_len must be ≥ 1"));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::validation("patience values must be ≥ 1"));
        }
        if !(self.lr0 > 0.0) || !(self.lr_factor > 1.0) {
            return Err(Error::validation("need lr0 > 0 and lr_factor > 1"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::validation("min_delta must be ≥ 0"));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy between probabilities and 0/1 targets, with
/// the standard clamp. Plain-array twin of the tape op, used for
/// validation losses where no gradient is needed.
pub fn bce_loss(p: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if p.dim() != y.dim() {
        return Err(Error::validation(format!(
            "bce: probabilities {:?} vs targets {:?}",
            p.dim(),
            y.dim()
        )));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation("bce targets must be 0 or 1"));
    }
    let mut loss = 0.0;
    for (&pv, &yv) in p.iter().zip(y.iter()) {
        let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln();
    }
    Ok(loss / y.len() as f64)
}

/// ADAM with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8). Moment
/// buffers align with the parameter store's insertion order.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|(_, v)| Array2::zeros(v.dim())).collect();
        AdamState { t: 0, m: zeros.clone(), v: zeros, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over all parameters. `grads` must match the store's
    /// names and order (as produced by `TapeBinding::grads`).
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &[(String, Array2<f64>)],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::validation(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (name, grad) in grads {
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite gradient for parameter {name:?}"
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (name, grad)) in grads.iter().enumerate() {
            let value = params.get_mut(name).ok_or_else(|| {
                Error::validation(format!("adam: unknown parameter {name:?}"))
            })?;
            if value.dim() != grad.dim() {
                return Err(Error::validation(format!(
                    "adam: gradient for {name:?} has shape {:?}, parameter is {:?}",
                    grad.dim(),
                    value.dim()
                )));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(grad, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(grad, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(&mut *value).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
        Ok(())
    }
}

/// Plateau learning-rate schedule: after `patience` consecutive epochs
/// without a val-loss improvement greater than `min_delta`, divide the
/// rate by `factor` and restart the count.
#[derive(Debug, Clone)]
pub struct PlateauState {
    lr: f64,
    best: f64,
    since_improvement: usize,
}

impl PlateauState {
    pub fn new(lr0: f64) -> Self {
        PlateauState { lr: lr0, best: f64::INFINITY, since_improvement: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Observe one epoch's validation loss; returns the rate for the next
    /// epoch.
    pub fn observe(&mut self, val_loss: f64, patience: usize, factor: f64, min_delta: f64) -> f64 {
        if val_loss < self.best - min_delta {
            self.best = val_loss;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= patience {
                self.lr /= factor;
                self.since_improvement = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate in effect during this epoch's updates.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_micro_ap: f64,
}

/// One line-delimited JSON record per epoch.
pub fn history_to_jsonl(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters restored from the epoch with the lowest validation loss.
    pub model: AggregatorModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn truth_row(item: &crate::dataset::DatasetItem) -> Array2<f64> {
    let y = item.truth.indicator();
    Array2::from_shape_vec((1, y.len()), y.to_vec()).expect("indicator row")
}

/// Full-inference predictions for a list of trailer ids.
pub fn predict_ids(
    model: &AggregatorModel,
    dataset: &Dataset,
    ids: &[String],
    c: usize,
) -> Result<Vec<TrailerPrediction>> {
    ids.par_iter()
        .map(|id| {
            let item = dataset
                .get(id)
                .ok_or_else(|| Error::validation(format!("unknown trailer id {id:?}")))?;
            let probs = predict_trailer(model, &item.features, c)?;
            Ok(TrailerPrediction::new(id.clone(), probs, item.truth))
        })
        .collect()
}

/// Mean BCE over full-inference predictions.
pub fn validation_loss(preds: &[TrailerPrediction], dataset: &Dataset) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::validation("no validation predictions"));
    }
    let mut acc = 0.0;
    for p in preds {
        let item = dataset
            .get(&p.id)
            .ok_or_else(|| Error::validation(format!("unknown trailer id {:?}", p.id)))?;
        let row = Array2::from_shape_vec((1, p.probs.len()), p.probs.to_vec()).expect("row");
        acc += bce_loss(&row, &truth_row(item))?;
    }
    Ok(acc / preds.len() as f64)
}

/// Train `model` on `train_ids`, tracking val loss each epoch. Returns the
/// best-validation checkpoint and the full epoch history.
pub fn fit(
    dataset: &Dataset,
    train_ids: &[String],
    val_ids: &[String],
    model: AggregatorModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::validation("train and validation splits must be non-empty"));
    }
    for id in train_ids.iter().chain(val_ids) {
        if dataset.get(id).is_none() {
            return Err(Error::validation(format!("split references unknown trailer {id:?}")));
        }
    }
    if dataset.feature_width() != model.config.input_width {
        return Err(Error::validation(format!(
            "dataset width {} does not match model input width {}",
            dataset.feature_width(),
            model.config.input_width
        )));
    }

    let mut model = model;
    let mut adam = AdamState::new(&model.params);
    let mut plateau = PlateauState::new(config.lr0);
    let mut shuffle_rng = rng_for(config.seed, "train/shuffle");

    let mut history = Vec::new();
    let mut best_params = model.params.clone();
    let mut best_epoch = 0usize;
    let mut best_snapshot_loss = f64::INFINITY;
    let mut early_best = f64::INFINITY;
    let mut early_since = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let lr = plateau.lr();
        let mut order: Vec<&String> = train_ids.iter().collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch) {
            let per_sample: Result<Vec<SampleGrads>> = batch
                .par_iter()
                .map(|id| {
                    let item = dataset.get(id).expect("validated above");
                    let mut snippet_rng =
                        rng_for(config.seed, &format!("train/snippet/{epoch}/{id}"));
                    let snippet = sample_training_snippet(
                        item.features.nrows(),
                        config.snippet_len,
                        &mut snippet_rng,
                    )?;
                    let x = gather_rows(&item.features, &snippet);

                    let mut tape = Tape::new();
                    let binding = model.bind(&mut tape);
                    let node = tape.leaf(x);
                    let mut dropout_rng =
                        rng_for(config.seed, &format!("train/dropout/{epoch}/{id}"));
                    let out = model.forward(&mut tape, &binding, node, Some(&mut dropout_rng))?;
                    let loss = tape.bce_from_probs(out.probs, truth_row(item), BCE_CLAMP)?;
                    tape.backward(loss)?;
                    Ok((tape.value(loss)[[0, 0]], binding.grads(&tape)))
                })
                .collect();
            let per_sample = per_sample?;

            // Batch gradient = mean of per-sample gradients, accumulated in
            // batch order so the result is independent of worker timing.
            let scale = 1.0 / per_sample.len() as f64;
            let mut mean_grads = per_sample[0].1.clone();
            for (_, grads) in &per_sample[1..] {
                for (acc, (_, g)) in mean_grads.iter_mut().zip(grads) {
                    acc.1 += g;
                }
            }
            for (_, g) in &mut mean_grads {
                *g *= scale;
            }
            adam.step(&mut model.params, &mean_grads, lr)?;
            loss_sum += per_sample.iter().map(|(l, _)| l).sum::<f64>();
        }
        let train_loss = loss_sum / train_ids.len() as f64;

        let val_preds = predict_ids(&model, dataset, val_ids, config.snippet_len)?;
        let val_loss = validation_loss(&val_preds, dataset)?;
        let val_micro_ap = micro_ap(&val_preds)?;
        history.push(EpochRecord { epoch, lr, train_loss, val_loss, val_micro_ap });

        // Checkpoint restore tracks the strict arg-min; the patience
        // counters use the min_delta threshold.
        if val_loss < best_snapshot_loss {
            best_snapshot_loss = val_loss;
            best_params = model.params.clone();
            best_epoch = epoch;
        }
        if val_loss < early_best - config.min_delta {
            early_best = val_loss;
            early_since = 0;
        } else {
            early_since += 1;
        }
        plateau.observe(val_loss, config.plateau_patience, config.lr_factor, config.min_delta);
        if early_since >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss: best_snapshot_loss,
        stopped_early,
    })
}
