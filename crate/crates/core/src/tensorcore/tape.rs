#![allow(clippy::needless_range_loop)]

use super::kernels;
use super::tensor::{FloatMode, Tensor};
use super::LAYER_NORM_EPS;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Executed kernel with input references and saved context for backward.
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, mean: Vec<f64>, rstd: Vec<f64> },
    SoftmaxRows { x: NodeId },
    Gelu { x: NodeId },
    ConcatRows { parts: Vec<NodeId> },
    SliceRows { x: NodeId, start: usize },
    ConcatCols { parts: Vec<NodeId> },
    SliceCols { x: NodeId, start: usize },
    Transpose { x: NodeId },
    Mse { pred: NodeId, target: NodeId },
    LogSoftmaxRows { x: NodeId },
    L2NormalizeRows { x: NodeId, norms: Vec<f64> },
    DiagNegMean { x: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of executed kernels. Topological order holds by
/// construction: a node only references earlier nodes. One backward pass
/// per tape; distinct tapes are independent.
pub struct Tape {
    mode: FloatMode,
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradient tensors produced by a backward pass, indexed by node.
pub struct GradStore {
    grads: Vec<Option<Tensor>>,
}

impl GradStore {
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

impl Tape {
    pub fn new(mode: FloatMode) -> Self {
        Tape { mode, nodes: Vec::new(), backward_done: false }
    }

    pub fn mode(&self) -> FloatMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn tensor(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, kernel: &'static str, op: Op, value: Tensor) -> Result<NodeId> {
        if let Some(index) = value.first_non_finite() {
            return Err(Error::NumericFault { context: kernel.to_string(), index });
        }
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Records an input tensor. Leaves are quantized to the tape's float
    /// mode so every downstream value stays representable in that mode.
    pub fn leaf(&mut self, t: Tensor) -> Result<NodeId> {
        let t = t.quantized(self.mode);
        self.push("leaf", Op::Leaf, t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                kernel: "matmul",
                detail: format!("{}x{} @ {}x{}", ta.rows(), ta.cols(), tb.rows(), tb.cols()),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let out = kernels::matmul(ta.data(), tb.data(), m, k, n, self.mode);
        self.push("matmul", Op::Matmul { a, b }, Tensor::new(m, n, out)?)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                kernel: "add",
                detail: format!("{:?} + {:?}", ta.shape(), tb.shape()),
            });
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| self.mode.quantize(x + y))
            .collect();
        let t = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push("add", Op::Add { a, b }, t)
    }

    /// Scalar multiply — the only broadcast in the engine.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let tx = self.tensor(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| self.mode.quantize(v * c)).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data)?;
        self.push("scale", Op::Scale { x, c }, t)
    }

    /// Row-wise layer norm with affine gamma/beta (1×D each), eps 1e-5.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let t = self.tensor(id);
            if t.rows() != 1 || t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    kernel: "layer_norm",
                    detail: format!("{name} is {:?}, expected 1x{cols}", t.shape()),
                });
            }
        }
        let (mean, rstd) = kernels::layer_norm_stats(self.tensor(x).data(), rows, cols, LAYER_NORM_EPS);
        let g = self.tensor(gamma).data().to_vec();
        let b = self.tensor(beta).data().to_vec();
        let xd = self.tensor(x).data();
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let xhat = (xd[i * cols + j] - mean[i]) * rstd[i];
                out[i * cols + j] = self.mode.quantize(xhat * g[j] + b[j]);
            }
        }
        let t = Tensor::new(rows, cols, out)?;
        self.push("layer_norm", Op::LayerNorm { x, gamma, beta, mean, rstd }, t)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let mut out = kernels::softmax_rows(tx.data(), tx.rows(), tx.cols());
        self.mode.quantize_slice(&mut out);
        let t = Tensor::new(tx.rows(), tx.cols(), out)?;
        self.push("softmax_rows", Op::SoftmaxRows { x }, t)
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let mut out = kernels::log_softmax_rows(tx.data(), tx.rows(), tx.cols());
        self.mode.quantize_slice(&mut out);
        let t = Tensor::new(tx.rows(), tx.cols(), out)?;
        self.push("log_softmax_rows", Op::LogSoftmaxRows { x }, t)
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| self.mode.quantize(kernels::gelu(v))).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data)?;
        self.push("gelu", Op::Gelu { x }, t)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch { kernel: "concat_rows", detail: "no parts".into() });
        }
        let cols = self.tensor(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            let t = self.tensor(p);
            if t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    kernel: "concat_rows",
                    detail: format!("part has {} cols, expected {cols}", t.cols()),
                });
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.tensor(p).data());
        }
        let t = Tensor::new(rows, cols, data)?;
        self.push("concat_rows", Op::ConcatRows { parts: parts.to_vec() }, t)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let tx = self.tensor(x);
        if len == 0 || start + len > tx.rows() {
            return Err(Error::ShapeMismatch {
                kernel: "slice_rows",
                detail: format!("rows [{start}, {}) of {}x{}", start + len, tx.rows(), tx.cols()),
            });
        }
        let cols = tx.cols();
        let data = tx.data()[start * cols..(start + len) * cols].to_vec();
        let t = Tensor::new(len, cols, data)?;
        self.push("slice_rows", Op::SliceRows { x, start }, t)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch { kernel: "concat_cols", detail: "no parts".into() });
        }
        let rows = self.tensor(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.tensor(p);
            if t.rows() != rows {
                return Err(Error::ShapeMismatch {
                    kernel: "concat_cols",
                    detail: format!("part has {} rows, expected {rows}", t.rows()),
                });
            }
            cols += t.cols();
        }
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for &p in parts {
            let t = self.tensor(p);
            let pc = t.cols();
            for i in 0..rows {
                data[i * cols + offset..i * cols + offset + pc]
                    .copy_from_slice(&t.data()[i * pc..(i + 1) * pc]);
            }
            offset += pc;
        }
        let t = Tensor::new(rows, cols, data)?;
        self.push("concat_cols", Op::ConcatCols { parts: parts.to_vec() }, t)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let tx = self.tensor(x);
        if len == 0 || start + len > tx.cols() {
            return Err(Error::ShapeMismatch {
                kernel: "slice_cols",
                detail: format!("cols [{start}, {}) of {}x{}", start + len, tx.rows(), tx.cols()),
            });
        }
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&tx.data()[i * cols + start..i * cols + start + len]);
        }
        let t = Tensor::new(rows, len, data)?;
        self.push("slice_cols", Op::SliceCols { x, start }, t)
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j * rows + i] = tx.data()[i * cols + j];
            }
        }
        let t = Tensor::new(cols, rows, data)?;
        self.push("transpose", Op::Transpose { x }, t)
    }

    /// Mean over rows, sum over columns of the squared difference.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (tp, tt) = (self.tensor(pred), self.tensor(target));
        if tp.shape() != tt.shape() {
            return Err(Error::ShapeMismatch {
                kernel: "mse",
                detail: format!("{:?} vs {:?}", tp.shape(), tt.shape()),
            });
        }
        let rows = tp.rows() as f64;
        let sum: f64 = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let t = Tensor::scalar(self.mode.quantize(sum / rows));
        self.push("mse", Op::Mse { pred, target }, t)
    }

    /// Rows scaled to unit L2 norm. Errors on a zero-norm row.
    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut norms = vec![0.0; rows];
        for i in 0..rows {
            let n = tx.row_slice(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
            if n < 1e-30 {
                return Err(Error::NumericFault {
                    context: "l2_normalize_rows: zero-norm row".into(),
                    index: i,
                });
            }
            norms[i] = n;
        }
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] = self.mode.quantize(tx.data()[i * cols + j] / norms[i]);
            }
        }
        let t = Tensor::new(rows, cols, data)?;
        self.push("l2_normalize_rows", Op::L2NormalizeRows { x, norms }, t)
    }

    /// −(1/N)·Σᵢ Xᵢᵢ of a square matrix; the InfoNCE readout over a
    /// log-softmax similarity matrix.
    pub fn diag_neg_mean(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.tensor(x);
        if tx.rows() != tx.cols() {
            return Err(Error::ShapeMismatch {
                kernel: "diag_neg_mean",
                detail: format!("expected square, got {}x{}", tx.rows(), tx.cols()),
            });
        }
        let n = tx.rows();
        let sum: f64 = (0..n).map(|i| tx.at(i, i)).sum();
        let t = Tensor::scalar(self.mode.quantize(-sum / n as f64));
        self.push("diag_neg_mean", Op::DiagNegMean { x }, t)
    }

    /// Backward pass from a scalar root; gradients accumulate into every
    /// reachable node. Consumes the tape's single backward allowance.
    pub fn backward(&mut self, root: NodeId) -> Result<GradStore> {
        if !self.tensor(root).is_scalar() {
            return Err(Error::Tape(format!(
                "backward root must be scalar, got {:?}",
                self.tensor(root).shape()
            )));
        }
        self.backward_seeded(root, &Tensor::scalar(1.0))
    }

    /// Backward pass seeded with an upstream gradient for `root` — the
    /// vector-Jacobian form used to chain per-sample tapes into a batch
    /// loss graph.
    pub fn backward_seeded(&mut self, root: NodeId, seed: &Tensor) -> Result<GradStore> {
        if self.backward_done {
            return Err(Error::Tape("backward already ran on this tape".into()));
        }
        self.backward_done = true;
        if seed.shape() != self.tensor(root).shape() {
            return Err(Error::Tape(format!(
                "seed shape {:?} != root shape {:?}",
                seed.shape(),
                self.tensor(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed.clone());

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            self.accumulate_inputs(idx, &g, &mut grads)?;
        }
        Ok(GradStore { grads })
    }

    fn accumulate_inputs(
        &self,
        idx: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let add_into = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (ta, tb) = (self.tensor(*a), self.tensor(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let da = kernels::matmul_nt(g.data(), tb.data(), m, n, k, self.mode);
                let db = kernels::matmul_tn(ta.data(), g.data(), m, k, n, self.mode);
                add_into(grads, *a, Tensor::new(m, k, da)?);
                add_into(grads, *b, Tensor::new(k, n, db)?);
            }
            Op::Add { a, b } => {
                add_into(grads, *a, g.clone());
                add_into(grads, *b, g.clone());
            }
            Op::Scale { x, c } => {
                let data: Vec<f64> = g.data().iter().map(|&v| v * c).collect();
                add_into(grads, *x, Tensor::new(g.rows(), g.cols(), data)?);
            }
            Op::LayerNorm { x, gamma, beta, mean, rstd } => {
                let tx = self.tensor(*x);
                let (rows, cols) = (tx.rows(), tx.cols());
                let gam = self.tensor(*gamma).data().to_vec();
                let mut dx = vec![0.0; rows * cols];
                let mut dgamma = vec![0.0; cols];
                let mut dbeta = vec![0.0; cols];
                for i in 0..rows {
                    let xrow = &tx.data()[i * cols..(i + 1) * cols];
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    let mut sum_gd = 0.0;
                    let mut sum_gd_xhat = 0.0;
                    for j in 0..cols {
                        let xhat = (xrow[j] - mean[i]) * rstd[i];
                        let gd = grow[j] * gam[j];
                        sum_gd += gd;
                        sum_gd_xhat += gd * xhat;
                        dgamma[j] += grow[j] * xhat;
                        dbeta[j] += grow[j];
                    }
                    let inv_cols = 1.0 / cols as f64;
                    for j in 0..cols {
                        let xhat = (xrow[j] - mean[i]) * rstd[i];
                        let gd = grow[j] * gam[j];
                        dx[i * cols + j] =
                            rstd[i] * (gd - sum_gd * inv_cols - xhat * sum_gd_xhat * inv_cols);
                    }
                }
                add_into(grads, *x, Tensor::new(rows, cols, dx)?);
                add_into(grads, *gamma, Tensor::new(1, cols, dgamma)?);
                add_into(grads, *beta, Tensor::new(1, cols, dbeta)?);
            }
            Op::SoftmaxRows { x } => {
                let y = &self.nodes[idx].value;
                let (rows, cols) = (y.rows(), y.cols());
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    let yrow = &y.data()[i * cols..(i + 1) * cols];
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    let dot: f64 = yrow.iter().zip(grow).map(|(&yv, &gv)| yv * gv).sum();
                    for j in 0..cols {
                        dx[i * cols + j] = yrow[j] * (grow[j] - dot);
                    }
                }
                add_into(grads, *x, Tensor::new(rows, cols, dx)?);
            }
            Op::LogSoftmaxRows { x } => {
                let tx = self.tensor(*x);
                let (rows, cols) = (tx.rows(), tx.cols());
                let sm = kernels::softmax_rows(tx.data(), rows, cols);
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    let gsum: f64 = grow.iter().sum();
                    for j in 0..cols {
                        dx[i * cols + j] = grow[j] - sm[i * cols + j] * gsum;
                    }
                }
                add_into(grads, *x, Tensor::new(rows, cols, dx)?);
            }
            Op::Gelu { x } => {
                let tx = self.tensor(*x);
                let data: Vec<f64> = tx
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| gv * kernels::gelu_grad(xv))
                    .collect();
                add_into(grads, *x, Tensor::new(tx.rows(), tx.cols(), data)?);
            }
            Op::ConcatRows { parts } => {
                let cols = g.cols();
                let mut start = 0;
                for &p in parts {
                    let pr = self.tensor(p).rows();
                    let data = g.data()[start * cols..(start + pr) * cols].to_vec();
                    add_into(grads, p, Tensor::new(pr, cols, data)?);
                    start += pr;
                }
            }
            Op::SliceRows { x, start } => {
                let tx = self.tensor(*x);
                let cols = tx.cols();
                let mut dx = vec![0.0; tx.rows() * cols];
                dx[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                add_into(grads, *x, Tensor::new(tx.rows(), cols, dx)?);
            }
            Op::ConcatCols { parts } => {
                let cols = g.cols();
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.tensor(p).cols();
                    let mut data = Vec::with_capacity(rows * pc);
                    for i in 0..rows {
                        data.extend_from_slice(&g.data()[i * cols + offset..i * cols + offset + pc]);
                    }
                    add_into(grads, p, Tensor::new(rows, pc, data)?);
                    offset += pc;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.tensor(*x);
                let (rows, cols) = (tx.rows(), tx.cols());
                let len = g.cols();
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    dx[i * cols + start..i * cols + start + len]
                        .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                }
                add_into(grads, *x, Tensor::new(rows, cols, dx)?);
            }
            Op::Transpose { x } => {
                let (rows, cols) = (g.rows(), g.cols());
                let mut data = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        data[j * rows + i] = g.data()[i * cols + j];
                    }
                }
                add_into(grads, *x, Tensor::new(cols, rows, data)?);
            }
            Op::Mse { pred, target } => {
                let (tp, tt) = (self.tensor(*pred), self.tensor(*target));
                let gs = g.data()[0];
                let scale = 2.0 * gs / tp.rows() as f64;
                let dp: Vec<f64> = tp
                    .data()
                    .iter()
                    .zip(tt.data())
                    .map(|(&p, &t)| scale * (p - t))
                    .collect();
                let dt: Vec<f64> = dp.iter().map(|&v| -v).collect();
                add_into(grads, *pred, Tensor::new(tp.rows(), tp.cols(), dp)?);
                add_into(grads, *target, Tensor::new(tp.rows(), tp.cols(), dt)?);
            }
            Op::L2NormalizeRows { x, norms } => {
                let y = &self.nodes[idx].value;
                let (rows, cols) = (y.rows(), y.cols());
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    let yrow = &y.data()[i * cols..(i + 1) * cols];
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    let dot: f64 = yrow.iter().zip(grow).map(|(&yv, &gv)| yv * gv).sum();
                    for j in 0..cols {
                        dx[i * cols + j] = (grow[j] - yrow[j] * dot) / norms[i];
                    }
                }
                add_into(grads, *x, Tensor::new(rows, cols, dx)?);
            }
            Op::DiagNegMean { x } => {
                let tx = self.tensor(*x);
                let n = tx.rows();
                let gs = g.data()[0];
                let mut dx = vec![0.0; n * n];
                for i in 0..n {
                    dx[i * n + i] = -gs / n as f64;
                }
                add_into(grads, *x, Tensor::new(n, n, dx)?);
            }
        }
        Ok(())
    }
}
