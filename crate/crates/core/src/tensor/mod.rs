//! Reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Tape`] records a static per-batch graph: every operation appends a
//! node holding its value, and [`Tape::backward`] walks the nodes in reverse
//! creation order, accumulating gradients into parents. All values are
//! two-axis (`rows × cols`); vectors are `1 × n` rows and scalars `1 × 1`.
//!
//! Gradients accumulate: calling `backward` twice without
//! [`Tape::zero_grads`] sums contributions, which is what per-sample loss
//! accumulation relies on. Everything is `f64` and single-threaded, so
//! identical inputs give bit-identical forward and backward results.

mod checkpoint;
mod params;

pub use checkpoint::{load_params, read_params_from, save_params, write_params_to, DVTM_MAGIC, DVTM_VERSION};
pub use params::{linear_init, ParamStore, TapeBinding};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Matrix plus a `1 × cols` row broadcast over every row.
    AddRow(NodeId, NodeId),
    /// Matrix times a `1 × cols` row, elementwise per row.
    MulRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `a * x + b` elementwise; only the slope survives into the backward
    /// pass, so the offset is not stored.
    AffineScalar { x: NodeId, a: f64 },
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, len: usize },
    SliceRows { x: NodeId, start: usize, len: usize },
    /// Rows shifted by `offset` (positive = down), vacated rows zero.
    ShiftRows { x: NodeId, offset: isize },
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    LayerNormRows { x: NodeId, eps: f64 },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    MeanRows(NodeId),
    Sum(NodeId),
    /// Mean of several `1 × 1` nodes.
    MeanScalars(Vec<NodeId>),
    Dropout { x: NodeId, mask: Array2<f64> },
    /// Mean binary cross-entropy of probabilities against fixed targets,
    /// probabilities clamped to `[clamp, 1 − clamp]` before the logs.
    BceFromProbs { p: NodeId, y: Array2<f64>, clamp: f64 },
}

pub struct Tape {
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { values: Vec::new(), grads: Vec::new(), ops: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        let id = NodeId(self.values.len());
        self.grads.push(Array2::zeros(value.dim()));
        self.values.push(value);
        self.ops.push(op);
        id
    }

    /// A leaf node (input, parameter, or constant).
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn grad(&self, id: NodeId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.values[id.0].dim()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::validation(format!("matmul: {ar}x{ac} · {br}x{bc} shapes do not chain")));
        }
        let value = self.values[a.0].dot(&self.values[b.0]);
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::validation(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value = &self.values[a.0] + &self.values[b.0];
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// `x + row`, with `row` of shape `1 × cols` broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (_, xc) = self.shape(x);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != xc {
            return Err(Error::validation(format!(
                "add_row: row is {rr}x{rc}, expected 1x{xc}"
            )));
        }
        let value = &self.values[x.0] + &self.values[row.0].row(0);
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    /// `x ∘ row`, with `row` of shape `1 × cols` broadcast over rows.
    pub fn mul_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (_, xc) = self.shape(x);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != xc {
            return Err(Error::validation(format!(
                "mul_row: row is {rr}x{rc}, expected 1x{xc}"
            )));
        }
        let value = &self.values[x.0] * &self.values[row.0].row(0);
        Ok(self.push(value, Op::MulRow(x, row)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::validation(format!(
                "mul: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value = &self.values[a.0] * &self.values[b.0];
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `a * x + b` elementwise.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        let value = self.values[x.0].mapv(|v| a * v + b);
        self.push(value, Op::AffineScalar { x, a })
    }

    pub fn scale(&mut self, x: NodeId, a: f64) -> NodeId {
        self.affine(x, a, 0.0)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::validation("concat_cols: no parts"));
        }
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::validation("concat_cols: row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Array2::zeros((rows, total));
        let mut at = 0;
        for &p in parts {
            let w = self.shape(p).1;
            value
                .slice_mut(ndarray::s![.., at..at + w])
                .assign(&self.values[p.0]);
            at += w;
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (_, cols) = self.shape(x);
        if len == 0 || start + len > cols {
            return Err(Error::validation(format!(
                "slice_cols: [{start}, {start}+{len}) out of 0..{cols}"
            )));
        }
        let value = self.values[x.0].slice(ndarray::s![.., start..start + len]).to_owned();
        Ok(self.push(value, Op::SliceCols { x, start, len }))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, _) = self.shape(x);
        if len == 0 || start + len > rows {
            return Err(Error::validation(format!(
                "slice_rows: [{start}, {start}+{len}) out of 0..{rows}"
            )));
        }
        let value = self.values[x.0].slice(ndarray::s![start..start + len, ..]).to_owned();
        Ok(self.push(value, Op::SliceRows { x, start, len }))
    }

    /// Shift rows by `offset` (positive shifts content toward higher
    /// indices); vacated rows are zero. Used for same-padded convolution.
    pub fn shift_rows(&mut self, x: NodeId, offset: isize) -> NodeId {
        let (rows, cols) = self.shape(x);
        let mut value = Array2::zeros((rows, cols));
        for i in 0..rows {
            let j = i as isize - offset;
            if j >= 0 && (j as usize) < rows {
                value.row_mut(i).assign(&self.values[x.0].row(j as usize));
            }
        }
        self.push(value, Op::ShiftRows { x, offset })
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x.0].t().to_owned();
        self.push(value, Op::Transpose(x))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let mut value = self.values[x.0].clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Normalize each row to mean 0 and variance 1 (population variance,
    /// stabilized by `eps`). Any affine rescale is applied by the caller via
    /// [`Tape::mul_row`] / [`Tape::add_row`].
    pub fn layer_norm_rows(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        if eps <= 0.0 {
            return Err(Error::validation("layer_norm eps must be positive"));
        }
        let mut value = self.values[x.0].clone();
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        Ok(self.push(value, Op::LayerNormRows { x, eps }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x.0].mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x.0].mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x.0].mapv(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    /// Mean over rows (time-average pooling): `rows × cols` → `1 × cols`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let rows = self.shape(x).0 as f64;
        let value = self.values[x.0]
            .sum_axis(Axis(0))
            .insert_axis(Axis(0))
            .mapv(|v| v / rows);
        self.push(value, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.values[x.0].sum());
        self.push(value, Op::Sum(x))
    }

    /// Mean of several scalar nodes; used to average per-sample losses.
    pub fn mean_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::validation("mean_scalars: no inputs"));
        }
        for &x in xs {
            if self.shape(x) != (1, 1) {
                return Err(Error::validation(format!(
                    "mean_scalars: node has shape {:?}, expected 1x1",
                    self.shape(x)
                )));
            }
        }
        let mean = xs.iter().map(|&x| self.values[x.0][[0, 0]]).sum::<f64>() / xs.len() as f64;
        let value = Array2::from_elem((1, 1), mean);
        Ok(self.push(value, Op::MeanScalars(xs.to_vec())))
    }

    /// Inverted dropout with keep-probability `1 − rate`. `rate == 0` is the
    /// identity and adds no node.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, rate: f64, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::validation(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let mask = Array2::from_shape_fn(self.shape(x), |_| {
            if rng.gen_bool(keep) {
                1.0 / keep
            } else {
                0.0
            }
        });
        let value = &self.values[x.0] * &mask;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    /// Mean binary cross-entropy between probabilities `p` and fixed 0/1
    /// targets `y`, with probabilities clamped to `[clamp, 1 − clamp]`
    /// before the logarithms. Returns a `1 × 1` node.
    pub fn bce_from_probs(&mut self, p: NodeId, y: Array2<f64>, clamp: f64) -> Result<NodeId> {
        if self.shape(p) != y.dim() {
            return Err(Error::validation(format!(
                "bce: probabilities {:?} vs targets {:?}",
                self.shape(p),
                y.dim()
            )));
        }
        if !(0.0..0.5).contains(&clamp) {
            return Err(Error::validation(format!("bce clamp {clamp} outside [0, 0.5)")));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::validation("bce targets must be 0 or 1"));
        }
        let n = y.len() as f64;
        let mut loss = 0.0;
        for (&pv, &yv) in self.values[p.0].iter().zip(y.iter()) {
            let pc = pv.clamp(clamp, 1.0 - clamp);
            loss -= yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln();
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("bce loss is {loss}")));
        }
        let value = Array2::from_elem((1, 1), loss);
        Ok(self.push(value, Op::BceFromProbs { p, y, clamp }))
    }

    /// Reverse pass from a scalar root. Each call propagates a fresh unit
    /// seed through a scratch buffer and then adds the result into the
    /// stored gradients, so repeated calls without [`Tape::zero_grads`] sum
    /// exactly one contribution per call.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::validation(format!(
                "backward requires a 1x1 root, got {:?}",
                self.shape(root)
            )));
        }
        let mut msg: Vec<Array2<f64>> = self.values[..=root.0]
            .iter()
            .map(|v| Array2::zeros(v.dim()))
            .collect();
        msg[root.0][[0, 0]] = 1.0;

        for i in (0..=root.0).rev() {
            // Parents always precede children, so splitting at i gives
            // mutable access to parent messages while reading node i's.
            let (parent_grads, rest) = msg.split_at_mut(i);
            let g = &rest[0];
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[b.0].t());
                    let gb = self.values[a.0].t().dot(g);
                    parent_grads[a.0] += &ga;
                    parent_grads[b.0] += &gb;
                }
                Op::Add(a, b) => {
                    parent_grads[a.0] += g;
                    parent_grads[b.0] += g;
                }
                Op::AddRow(x, row) => {
                    let col_sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    parent_grads[x.0] += g;
                    parent_grads[row.0] += &col_sum;
                }
                Op::MulRow(x, row) => {
                    let gx = g * &self.values[row.0].row(0);
                    let grow = (g * &self.values[x.0]).sum_axis(Axis(0)).insert_axis(Axis(0));
                    parent_grads[x.0] += &gx;
                    parent_grads[row.0] += &grow;
                }
                Op::Mul(a, b) => {
                    let ga = g * &self.values[b.0];
                    let gb = g * &self.values[a.0];
                    parent_grads[a.0] += &ga;
                    parent_grads[b.0] += &gb;
                }
                Op::AffineScalar { x, a } => {
                    parent_grads[x.0].scaled_add(*a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.values[p.0].ncols();
                        let gp = g.slice(ndarray::s![.., at..at + w]);
                        parent_grads[p.0] += &gp;
                        at += w;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    parent_grads[x.0]
                        .slice_mut(ndarray::s![.., *start..start + len])
                        .scaled_add(1.0, g);
                }
                Op::SliceRows { x, start, len } => {
                    parent_grads[x.0]
                        .slice_mut(ndarray::s![*start..start + len, ..])
                        .scaled_add(1.0, g);
                }
                Op::ShiftRows { x, offset } => {
                    let rows = g.nrows() as isize;
                    for i_out in 0..g.nrows() {
                        let j = i_out as isize - offset;
                        if j >= 0 && j < rows {
                            let mut target = parent_grads[x.0].row_mut(j as usize);
                            target += &g.row(i_out);
                        }
                    }
                }
                Op::Transpose(x) => {
                    parent_grads[x.0] += &g.t();
                }
                Op::SoftmaxRows(x) => {
                    let s = &self.values[i];
                    let mut gx = Array2::zeros(g.dim());
                    for r in 0..g.nrows() {
                        let srow = s.row(r);
                        let grow = g.row(r);
                        let dot: f64 = srow.iter().zip(grow.iter()).map(|(a, b)| a * b).sum();
                        for c in 0..g.ncols() {
                            gx[[r, c]] = srow[c] * (grow[c] - dot);
                        }
                    }
                    parent_grads[x.0] += &gx;
                }
                Op::LayerNormRows { x, eps } => {
                    let xhat = &self.values[i];
                    let input = &self.values[x.0];
                    let mut gx = Array2::zeros(g.dim());
                    for r in 0..g.nrows() {
                        let n = g.ncols() as f64;
                        let row = input.row(r);
                        let mean = row.sum() / n;
                        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let grow = g.row(r);
                        let hrow = xhat.row(r);
                        let g_mean: f64 = grow.sum() / n;
                        let gh_mean: f64 =
                            grow.iter().zip(hrow.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..g.ncols() {
                            gx[[r, c]] = inv * (grow[c] - g_mean - hrow[c] * gh_mean);
                        }
                    }
                    parent_grads[x.0] += &gx;
                }
                Op::Relu(x) => {
                    let gate = self.values[x.0].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    parent_grads[x.0] += &(g * &gate);
                }
                Op::Sigmoid(x) => {
                    let s = &self.values[i];
                    let gx = g * &s.mapv(|v| v * (1.0 - v));
                    parent_grads[x.0] += &gx;
                }
                Op::Tanh(x) => {
                    let t = &self.values[i];
                    let gx = g * &t.mapv(|v| 1.0 - v * v);
                    parent_grads[x.0] += &gx;
                }
                Op::MeanRows(x) => {
                    let rows = self.values[x.0].nrows() as f64;
                    let grow = g.row(0).mapv(|v| v / rows);
                    for mut target in parent_grads[x.0].rows_mut() {
                        target += &grow;
                    }
                }
                Op::Sum(x) => {
                    let g0 = g[[0, 0]];
                    parent_grads[x.0] += g0;
                }
                Op::MeanScalars(xs) => {
                    let share = g[[0, 0]] / xs.len() as f64;
                    for &x in xs {
                        parent_grads[x.0][[0, 0]] += share;
                    }
                }
                Op::Dropout { x, mask } => {
                    parent_grads[x.0] += &(g * mask);
                }
                Op::BceFromProbs { p, y, clamp } => {
                    let g0 = g[[0, 0]];
                    let n = y.len() as f64;
                    let pv = &self.values[p.0];
                    let mut gp = Array2::zeros(pv.dim());
                    for ((gp, &pvv), &yv) in gp.iter_mut().zip(pv.iter()).zip(y.iter()) {
                        // Inside the clamp region the loss is flat in p.
                        if pvv > *clamp && pvv < 1.0 - *clamp {
                            *gp = g0 * (-yv / pvv + (1.0 - yv) / (1.0 - pvv)) / n;
                        }
                    }
                    parent_grads[p.0] += &gp;
                }
            }
        }
        for (slot, m) in self.grads.iter_mut().zip(msg) {
            *slot += &m;
        }
        Ok(())
    }
}

/// Embedding-free sinusoidal positional table: row `t`, columns alternate
/// `sin(t / 10000^(2i/cols))`, `cos(t / 10000^(2i/cols))`.
pub fn sinusoidal_table(rows: usize, cols: usize) -> Array2<f64> {
    let mut table = Array2::zeros((rows, cols));
    for t in 0..rows {
        for c in 0..cols {
            let i = c / 2;
            let rate = 10000f64.powf(2.0 * i as f64 / cols as f64);
            let angle = t as f64 / rate;
            table[[t, c]] = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    table
}

/// Column vector of per-row sums — convenience for tests.
pub fn row_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(1))
}

#[cfg(test)]
mod tests;
