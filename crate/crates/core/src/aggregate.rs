//! Clip aggregation models.
//!
//! Every model shares the same skeleton: a linear reduction layer maps each
//! clip feature vector from width `b` down to `d < b`, an aggregation stage
//! turns the `c × d` sequence into a single summary vector, and a sigmoid
//! classification head emits ten per-genre probabilities.
//!
//! Aggregation stages:
//! - `Transformer`: post-norm encoder blocks (multi-head self-attention,
//!   then a relu feed-forward of width `4d`), followed by time-average
//!   pooling. Sinusoidal positional encoding is added before the first
//!   block and can be switched off, which makes the stage
//!   permutation-invariant after pooling.
//! - `Gru`: a single recurrent cell scanned over time (Cho et al.
//!   convention, `h' = (1−z)∘h + z∘h̃`); the summary is the final state.
//! - `Conv`: one same-padded 1-D convolution over time with relu, then
//!   time-average pooling.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genres::GENRE_COUNT;
use crate::seed::rng_for;
use crate::tensor::{
    load_params, save_params, sinusoidal_table, NodeId, ParamStore, Tape, TapeBinding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    Transformer,
    Gru,
    Conv,
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AggregatorKind::Transformer => "transformer",
            AggregatorKind::Gru => "gru",
            AggregatorKind::Conv => "conv",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(AggregatorKind::Transformer),
            "gru" => Ok(AggregatorKind::Gru),
            "conv" => Ok(AggregatorKind::Conv),
            _ => Err(Error::validation(format!("unknown aggregator kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    /// Input clip feature width `b`.
    pub input_width: usize,
    /// Width `d` after the reduction layer; must be smaller than `b` and
    /// divisible by `heads`.
    pub model_width: usize,
    pub kind: AggregatorKind,
    pub blocks: usize,
    pub heads: usize,
    /// Feed-forward hidden width as a multiple of `model_width`.
    pub ffn_multiplier: usize,
    /// Dropout on sublayer outputs at training time (transformer only).
    pub dropout: f64,
    /// Add the sinusoidal positional table before the first block.
    pub positional: bool,
    pub gru_hidden: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub layer_norm_eps: f64,
}

impl AggregatorConfig {
    pub fn new(input_width: usize) -> Self {
        AggregatorConfig {
            input_width,
            model_width: 128,
            kind: AggregatorKind::Transformer,
            blocks: 4,
            heads: 4,
            ffn_multiplier: 4,
            dropout: 0.1,
            positional: true,
            gru_hidden: 115,
            conv_filters: 128,
            conv_width: 3,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn with_model_width(mut self, d: usize) -> Self {
        self.model_width = d;
        self
    }

    pub fn with_kind(mut self, kind: AggregatorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn with_positional(mut self, on: bool) -> Self {
        self.positional = on;
        self
    }

    pub fn with_gru_hidden(mut self, hidden: usize) -> Self {
        self.gru_hidden = hidden;
        self
    }

    pub fn with_conv_filters(mut self, filters: usize) -> Self {
        self.conv_filters = filters;
        self
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_multiplier * self.model_width
    }

    /// Width of the summary vector feeding the classification head.
    pub fn summary_width(&self) -> usize {
        match self.kind {
            AggregatorKind::Transformer => self.model_width,
            AggregatorKind::Gru => self.gru_hidden,
            AggregatorKind::Conv => self.conv_filters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_width == 0 || self.input_width == 0 {
            return Err(Error::validation("widths must be positive"));
        }
        if self.model_width >= self.input_width {
            return Err(Error::validation(format!(
                "model width {} must be smaller than input width {} (the reduction layer shrinks)",
                self.model_width, self.input_width
            )));
        }
        if self.heads == 0 || !self.model_width.is_multiple_of(self.heads) {
            return Err(Error::validation(format!(
                "model width {} must divide into {} heads",
                self.model_width, self.heads
            )));
        }
        if self.blocks == 0 || self.ffn_multiplier == 0 {
            return Err(Error::validation("blocks and ffn_multiplier must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.gru_hidden == 0 || self.conv_filters == 0 {
            return Err(Error::validation("summary widths must be positive"));
        }
        if self.conv_width == 0 || self.conv_width.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "conv width {} must be odd for symmetric same-padding",
                self.conv_width
            )));
        }
        if self.layer_norm_eps <= 0.0 {
            return Err(Error::validation("layer_norm_eps must be positive"));
        }
        Ok(())
    }
}

enum Init {
    Linear { fan_in: usize },
    Zeros,
    Ones,
}

/// Parameter layout (name, shape, init) for a config, in a fixed order.
/// Initialization, binding, checkpoint bytes, and load-time validation all
/// derive from this one listing.
fn param_layout(config: &AggregatorConfig) -> Vec<(String, (usize, usize), Init)> {
    let (b, d) = (config.input_width, config.model_width);
    let mut layout = vec![
        ("reduce.w".to_string(), (b, d), Init::Linear { fan_in: b }),
        ("reduce.b".to_string(), (1, d), Init::Zeros),
    ];
    match config.kind {
        AggregatorKind::Transformer => {
            let ffn = config.ffn_width();
            for i in 0..config.blocks {
                for proj in ["wq", "wk", "wv", "wo"] {
                    layout.push((format!("block{i}.attn.{proj}"), (d, d), Init::Linear { fan_in: d }));

                }
                for bias in ["bq", "bk", "bv", "bo"] {
                    layout.push((format!("block{i}.attn.{bias}"), (1, d), Init::Zeros));
                }
                layout.push((format!("block{i}.norm1.gamma"), (1, d), Init::Ones));
                layout.push((format!("block{i}.norm1.beta"), (1, d), Init::Zeros));
                layout.push((format!("block{i}.ffn.w1"), (d, ffn), Init::Linear { fan_in: d }));
                layout.push((format!("block{i}.ffn.b1"), (1, ffn), Init::Zeros));
                layout.push((format!("block{i}.ffn.w2"), (ffn, d), Init::Linear { fan_in: ffn }));
                layout.push((format!("block{i}.ffn.b2"), (1, d), Init::Zeros));
                layout.push((format!("block{i}.norm2.gamma"), (1, d), Init::Ones));
                layout.push((format!("block{i}.norm2.beta"), (1, d), Init::Zeros));
            }
        }
        AggregatorKind::Gru => {
            let h = config.gru_hidden;
            for gate in ["z", "r", "n"] {
                layout.push((format!("gru.w{gate}"), (d, h), Init::Linear { fan_in: d }));
                layout.push((format!("gru.u{gate}"), (h, h), Init::Linear { fan_in: h }));
                layout.push((format!("gru.b{gate}"), (1, h), Init::Zeros));
            }
        }
        AggregatorKind::Conv => {
            let filters = config.conv_filters;
            for t in 0..config.conv_width {
                layout.push((format!("conv.w{t}"), (d, filters), Init::Linear { fan_in: d * config.conv_width }));
            }
            layout.push(("conv.b".to_string(), (1, filters), Init::Zeros));
        }
    }
    let s = config.summary_width();
    layout.push(("cls.w".to_string(), (s, GENRE_COUNT), Init::Linear { fan_in: s }));
    layout.push(("cls.b".to_string(), (1, GENRE_COUNT), Init::Zeros));
    layout
}

/// Logit and probability nodes produced by a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub logits: NodeId,
    pub probs: NodeId,
}

#[derive(Debug, Clone)]
pub struct AggregatorModel {
    pub config: AggregatorConfig,
    pub params: ParamStore,
}

impl AggregatorModel {
    /// Deterministic initialization: the same config and seed always yield
    /// the same parameters (and therefore identical checkpoint bytes).
    pub fn new(config: AggregatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, "model/init");
        let mut params = ParamStore::new();
        for (name, (rows, cols), init) in param_layout(&config) {
            // Conv taps share a fan-in of d×width across separate matrices,
            // so the bound is taken from the layout's fan_in, not the shape.
            let value = match init {
                Init::Linear { fan_in } => {
                    let bound = (1.0 / fan_in as f64).sqrt();
                    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
                }
                Init::Zeros => Array2::zeros((rows, cols)),
                Init::Ones => Array2::ones((rows, cols)),
            };
            params.insert(name, value)?;
        }
        Ok(AggregatorModel { config, params })
    }

    pub fn bind(&self, tape: &mut Tape) -> TapeBinding {
        self.params.bind(tape)
    }

    fn linear(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        x: NodeId,
        w: &str,
        b: &str,
    ) -> Result<NodeId> {
        let h = tape.matmul(x, binding.id(w))?;
        tape.add_row(h, binding.id(b))
    }

    /// Reduction layer: map each clip row independently from `b` to `d`.
    pub fn reduce(&self, tape: &mut Tape, binding: &TapeBinding, x: NodeId) -> Result<NodeId> {
        let (c, b) = tape.value(x).dim();
        if c == 0 || b != self.config.input_width {
            return Err(Error::validation(format!(
                "input is {c}x{b}, expected cx{}",
                self.config.input_width
            )));
        }
        self.linear(tape, binding, x, "reduce.w", "reduce.b")
    }

    fn norm_affine(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        x: NodeId,
        gamma: &str,
        beta: &str,
    ) -> Result<NodeId> {
        let h = tape.layer_norm_rows(x, self.config.layer_norm_eps)?;
        let h = tape.mul_row(h, binding.id(gamma))?;
        tape.add_row(h, binding.id(beta))
    }

    fn attention(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        h: NodeId,
        block: usize,
    ) -> Result<NodeId> {
        let d = self.config.model_width;
        let heads = self.config.heads;
        let hw = d / heads;
        let q = self.linear(tape, binding, h, &format!("block{block}.attn.wq"), &format!("block{block}.attn.bq"))?;
        let k = self.linear(tape, binding, h, &format!("block{block}.attn.wk"), &format!("block{block}.attn.bk"))?;
        let v = self.linear(tape, binding, h, &format!("block{block}.attn.wv"), &format!("block{block}.attn.bv"))?;
        let mut outs = Vec::with_capacity(heads);
        for i in 0..heads {
            let qi = tape.slice_cols(q, i * hw, hw)?;
            let ki = tape.slice_cols(k, i * hw, hw)?;
            let vi = tape.slice_cols(v, i * hw, hw)?;
            let kt = tape.transpose(ki);
            let scores = tape.matmul(qi, kt)?;
            let scores = tape.scale(scores, 1.0 / (hw as f64).sqrt());
            let weights = tape.softmax_rows(scores);
            outs.push(tape.matmul(weights, vi)?);
        }
        let o = tape.concat_cols(&outs)?;
        self.linear(tape, binding, o, &format!("block{block}.attn.wo"), &format!("block{block}.attn.bo"))
    }

    /// Transformer encoder stage over the reduced sequence. Positional
    /// encoding (when enabled) is added once before the first block.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        h: NodeId,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<NodeId> {
        let (c, d) = tape.value(h).dim();
        if d != self.config.model_width {
            return Err(Error::validation(format!(
                "encode input is {c}x{d}, expected cx{}",
                self.config.model_width
            )));
        }
        let mut h = h;
        if self.config.positional {
            let table = tape.leaf(sinusoidal_table(c, d));
            h = tape.add(h, table)?;
        }
        for block in 0..self.config.blocks {
            let mut attn = self.attention(tape, binding, h, block)?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                attn = tape.dropout(attn, self.config.dropout, rng)?;
            }
            let res = tape.add(h, attn)?;
            h = self.norm_affine(tape, binding, res, &format!("block{block}.norm1.gamma"), &format!("block{block}.norm1.beta"))?;

            let f = self.linear(tape, binding, h, &format!("block{block}.ffn.w1"), &format!("block{block}.ffn.b1"))?;
            let f = tape.relu(f);
            let mut f = self.linear(tape, binding, f, &format!("block{block}.ffn.w2"), &format!("block{block}.ffn.b2"))?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                f = tape.dropout(f, self.config.dropout, rng)?;
            }
            let res = tape.add(h, f)?;
            h = self.norm_affine(tape, binding, res, &format!("block{block}.norm2.gamma"), &format!("block{block}.norm2.beta"))?;
        }
        Ok(h)
    }

    /// Time-average pooling: `c × w` → `1 × w`.
    pub fn pool(&self, tape: &mut Tape, h: NodeId) -> NodeId {
        tape.mean_rows(h)
    }

    /// GRU scan over the reduced sequence; returns the final hidden state.
    pub fn aggregate_gru(&self, tape: &mut Tape, binding: &TapeBinding, h: NodeId) -> Result<NodeId> {
        let (c, _) = tape.value(h).dim();
        let hidden = self.config.gru_hidden;
        let mut state = tape.leaf(Array2::zeros((1, hidden)));
        for t in 0..c {
            let x_t = tape.slice_rows(h, t, 1)?;
            let z = self.gru_gate(tape, binding, x_t, state, "z")?;
            let z = tape.sigmoid(z);
            let r = self.gru_gate(tape, binding, x_t, state, "r")?;
            let r = tape.sigmoid(r);
            let gated = tape.mul(r, state)?;
            let xn = tape.matmul(x_t, binding.id("gru.wn"))?;
            let hn = tape.matmul(gated, binding.id("gru.un"))?;
            let n = tape.add(xn, hn)?;
            let n = tape.add_row(n, binding.id("gru.bn"))?;
            let n = tape.tanh(n);
            // h' = (1 − z) ∘ h + z ∘ h̃
            let keep = tape.affine(z, -1.0, 1.0);
            let kept = tape.mul(keep, state)?;
            let new = tape.mul(z, n)?;
            state = tape.add(kept, new)?;
        }
        Ok(state)
    }

    fn gru_gate(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        x_t: NodeId,
        state: NodeId,
        gate: &str,
    ) -> Result<NodeId> {
        let xw = tape.matmul(x_t, binding.id(&format!("gru.w{gate}")))?;
        let hu = tape.matmul(state, binding.id(&format!("gru.u{gate}")))?;
        let s = tape.add(xw, hu)?;
        tape.add_row(s, binding.id(&format!("gru.b{gate}")))
    }

    /// Same-padded 1-D convolution over time, relu, then average pooling.
    pub fn aggregate_conv(&self, tape: &mut Tape, binding: &TapeBinding, h: NodeId) -> Result<NodeId> {
        let k = self.config.conv_width;
        let half = (k / 2) as isize;
        let mut acc: Option<NodeId> = None;
        for t in 0..k {
            let shift = half - t as isize;
            let shifted = if shift == 0 { h } else { tape.shift_rows(h, shift) };
            let term = tape.matmul(shifted, binding.id(&format!("conv.w{t}")))?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        let conv = tape.add_row(acc.expect("k >= 1"), binding.id("conv.b"))?;
        let conv = tape.relu(conv);
        Ok(tape.mean_rows(conv))
    }

    /// Classification head: summary vector → ten logits → probabilities.
    pub fn classify(&self, tape: &mut Tape, binding: &TapeBinding, s: NodeId) -> Result<ForwardNodes> {
        let logits = self.linear(tape, binding, s, "cls.w", "cls.b")?;
        let probs = tape.sigmoid(logits);
        Ok(ForwardNodes { logits, probs })
    }

    /// Full forward pass over one snippet (`c × b` leaf node). Dropout is
    /// applied only when a training rng is supplied.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        x: NodeId,
        dropout_rng: Option<&mut R>,
    ) -> Result<ForwardNodes> {
        let h = self.reduce(tape, binding, x)?;
        let summary = match self.config.kind {
            AggregatorKind::Transformer => {
                let h = self.encode(tape, binding, h, dropout_rng)?;
                self.pool(tape, h)
            }
            AggregatorKind::Gru => self.aggregate_gru(tape, binding, h)?,
            AggregatorKind::Conv => self.aggregate_conv(tape, binding, h)?,
        };
        self.classify(tape, binding, summary)
    }

    /// Inference helper: logits and probabilities for one snippet.
    pub fn predict(&self, x: &Array2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape);
        let x = tape.leaf(x.clone());
        let out = self.forward::<rand_chacha::ChaCha8Rng>(&mut tape, &binding, x, None)?;
        let logits = tape.value(out.logits).row(0).to_owned();
        let probs = tape.value(out.probs).row(0).to_owned();
        Ok((logits, probs))
    }
}

/// Late fusion: elementwise mean of two logit vectors.
pub fn fuse_logits(a: &Array1<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "fuse_logits: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok((a + b) / 2.0)
}

fn config_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write the checkpoint plus a JSON config sidecar (`<stem>.json`).
pub fn save_model(path: &Path, model: &AggregatorModel) -> Result<()> {
    save_params(path, &model.params)?;
    let json = serde_json::to_string_pretty(&model.config).expect("config serializes");
    std::fs::write(config_path(path), json)?;
    Ok(())
}

/// Load a checkpoint and its sidecar, verifying the parameters match the
/// config's expected layout exactly.
pub fn load_model(path: &Path) -> Result<AggregatorModel> {
    let json = std::fs::read_to_string(config_path(path))?;
    let config: AggregatorConfig = serde_json::from_str(&json)
        .map_err(|e| Error::format(format!("bad model config sidecar: {e}")))?;
    config.validate()?;
    let params = load_params(path)?;
    let layout = param_layout(&config);
    if params.len() != layout.len() {
        return Err(Error::format(format!(
            "checkpoint holds {} parameters, config expects {}",
            params.len(),
            layout.len()
        )));
    }
    for (name, shape, _) in &layout {
        match params.get(name) {
            Some(v) if v.dim() == *shape => {}
            Some(v) => {
                return Err(Error::format(format!(
                    "parameter {name:?} has shape {:?}, config expects {shape:?}",
                    v.dim()
                )))
            }
            None => return Err(Error::format(format!("checkpoint is missing parameter {name:?}"))),
        }
    }
    Ok(AggregatorModel { config, params })
}
