//! Reverse-mode autodiff over dense row-major f64 matrices.
//!
//! A [`Tape`] is a growing arena of nodes; every op appends a node whose
//! inputs have smaller ids, so reverse iteration is a topological traversal.
//! Parameters enter as leaves (promoted f32 -> f64) and [`Tape::backward`]
//! accumulates their gradients back into the [`ParamStore`] without zeroing,
//! so repeated calls add up.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::nn::params::ParamStore;

/// Handle to a tape node: id + shape (rows, cols). Scalars are [1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

enum Op {
    Leaf { param: Option<usize> },
    Add(usize, usize),
    /// [N,D] + broadcast [1,D] row.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddConst(usize),
    MatMul { a: usize, b: usize, k: usize },
    Gelu(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sum(usize),
    Mean(usize),
    MaxPoolSeg { input: usize, argmax: Vec<u32> },
    SoftmaxXent { logits: usize, labels: Vec<u32>, probs: Vec<f64> },
    Mse(usize, usize),
    CosRows(usize, usize),
    GaussLogProb { mean: usize, log_std: usize, actions: Vec<f64> },
    Clamp { input: usize, lo: f64, hi: f64 },
    MinElem(usize, usize),
    ConcatCols(usize, usize),
    StopGrad,
    Chamfer { pred: usize, target: Vec<f64>, nn_fwd: Vec<u32>, nn_bwd: Vec<u32> },
    /// Each input row repeated `times` consecutive times.
    RepeatRows { input: usize, times: usize },
    SliceRows { input: usize, start: usize },
    Reshape(usize),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Computation graph arena. Build per forward/backward pass and drop.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> CoreError {
    CoreError::ShapeMismatch { op, lhs: a.shape(), rhs: b.shape() }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Tensor {
        debug_assert_eq!(value.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node { op, rows, cols, value });
        Tensor { id, rows, cols }
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, t: Tensor) -> f64 {
        debug_assert_eq!(t.len(), 1);
        self.nodes[t.id].value[0]
    }

    /// Constant input.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        self.push(Op::Leaf { param: None }, rows, cols, data)
    }

    pub fn input_f32(&mut self, rows: usize, cols: usize, data: &[f32]) -> Tensor {
        let v = data.iter().map(|&x| x as f64).collect();
        self.push(Op::Leaf { param: None }, rows, cols, v)
    }

    pub fn scalar_input(&mut self, v: f64) -> Tensor {
        self.input(1, 1, vec![v])
    }

    /// Parameter leaf: promotes the stored f32 values to f64.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Tensor, CoreError> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| CoreError::ParamMismatch(alloc::format!("no parameter {name}")))?;
        let e = store.entry(idx);
        let v = e.data.iter().map(|&x| x as f64).collect();
        Ok(self.push(Op::Leaf { param: Some(idx) }, e.rows, e.cols, v))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("add", &a, &b));
        }
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a.id, b.id), a.rows, a.cols, v))
    }

    /// Row broadcast: [N,D] + [1,D].
    pub fn add_row(&mut self, a: Tensor, row: Tensor) -> Result<Tensor, CoreError> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(shape_err("add_row", &a, &row));
        }
        let ra = &self.nodes[a.id].value;
        let rb = &self.nodes[row.id].value;
        let mut v = Vec::with_capacity(ra.len());
        for i in 0..a.rows {
            for j in 0..a.cols {
                v.push(ra[i * a.cols + j] + rb[j]);
            }
        }
        Ok(self.push(Op::AddRow(a.id, row.id), a.rows, a.cols, v))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("sub", &a, &b));
        }
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a.id, b.id), a.rows, a.cols, v))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("mul", &a, &b));
        }
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a.id, b.id), a.rows, a.cols, v))
    }

    pub fn neg(&mut self, a: Tensor) -> Tensor {
        let v = self.map(a, |x| -x);
        self.push(Op::Neg(a.id), a.rows, a.cols, v)
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let v = self.map(a, |x| c * x);
        self.push(Op::Scale(a.id, c), a.rows, a.cols, v)
    }

    pub fn add_const(&mut self, a: Tensor, c: f64) -> Tensor {
        let v = self.map(a, |x| x + c);
        self.push(Op::AddConst(a.id), a.rows, a.cols, v)
    }

    /// [N,K] x [K,M] -> [N,M].
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.cols != b.rows {
            return Err(shape_err("matmul", &a, &b));
        }
        let (n, k, m) = (a.rows, a.cols, b.cols);
        let va = &self.nodes[a.id].value;
        let vb = &self.nodes[b.id].value;
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &va[i * k..(i + 1) * k];
            let orow = &mut out[i * m..(i + 1) * m];
            for (kk, &av) in arow.iter().enumerate() {
                let brow = &vb[kk * m..(kk + 1) * m];
                for j in 0..m {
                    orow[j] += av * brow[j];
                }
            }
        }
        Ok(self.push(Op::MatMul { a: a.id, b: b.id, k }, n, m, out))
    }

    pub fn gelu(&mut self, a: Tensor) -> Tensor {
        let v = self.map(a, math::gelu);
        self.push(Op::Gelu(a.id), a.rows, a.cols, v)
    }

    pub fn tanh(&mut self, a: Tensor) -> Tensor {
        let v = self.map(a, math::tanh);
        self.push(Op::Tanh(a.id), a.rows, a.cols, v)
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        let v = self.map(a, math::exp);
        self.push(Op::Exp(a.id), a.rows, a.cols, v)
    }

    pub fn ln(&mut self, a: Tensor) -> Tensor {
        let v = self.map(a, math::ln);
        self.push(Op::Ln(a.id), a.rows, a.cols, v)
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.nodes[a.id].value.iter().sum();
        self.push(Op::Sum(a.id), 1, 1, vec![s])
    }

    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let s: f64 = self.nodes[a.id].value.iter().sum();
        let v = s / a.len() as f64;
        self.push(Op::Mean(a.id), 1, 1, vec![v])
    }

    /// Column-wise max over `segs` contiguous segments of `seg_len` rows:
    /// [segs*seg_len, D] -> [segs, D]. Ties keep the earliest row, so the
    /// value and gradient are deterministic.
    pub fn max_pool_segments(
        &mut self,
        a: Tensor,
        segs: usize,
        seg_len: usize,
    ) -> Result<Tensor, CoreError> {
        if seg_len == 0 || a.rows != segs * seg_len {
            return Err(CoreError::ShapeMismatch {
                op: "max_pool_segments",
                lhs: a.shape(),
                rhs: (segs * seg_len.max(1), a.cols),
            });
        }
        let d = a.cols;
        let va = &self.nodes[a.id].value;
        let mut out = vec![f64::NEG_INFINITY; segs * d];
        let mut argmax = vec![0u32; segs * d];
        for s in 0..segs {
            for r in 0..seg_len {
                let row = s * seg_len + r;
                for j in 0..d {
                    let x = va[row * d + j];
                    if x > out[s * d + j] {
                        out[s * d + j] = x;
                        argmax[s * d + j] = row as u32;
                    }
                }
            }
        }
        Ok(self.push(Op::MaxPoolSeg { input: a.id, argmax }, segs, d, out))
    }

    /// Mean softmax cross-entropy over rows: logits [N,C], one label per row.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Tensor,
        labels: &[usize],
    ) -> Result<Tensor, CoreError> {
        if labels.len() != logits.rows {
            return Err(CoreError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: logits.shape(),
                rhs: (labels.len(), logits.cols),
            });
        }
        let (n, c) = logits.shape();
        let v = &self.nodes[logits.id].value;
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for i in 0..n {
            debug_assert!(labels[i] < c);
            let row = &v[i * c..(i + 1) * c];
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut z = 0.0;
            for j in 0..c {
                let e = math::exp(row[j] - mx);
                probs[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                probs[i * c + j] /= z;
            }
            loss -= math::ln(probs[i * c + labels[i]].max(1e-300));
        }
        loss /= n as f64;
        let labels = labels.iter().map(|&l| l as u32).collect();
        Ok(self.push(Op::SoftmaxXent { logits: logits.id, labels, probs }, 1, 1, vec![loss]))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("mse", &a, &b));
        }
        let va = &self.nodes[a.id].value;
        let vb = &self.nodes[b.id].value;
        let mut s = 0.0;
        for i in 0..va.len() {
            let d = va[i] - vb[i];
            s += d * d;
        }
        let v = s / va.len() as f64;
        Ok(self.push(Op::Mse(a.id, b.id), 1, 1, vec![v]))
    }

    /// Row-wise cosine similarity: [N,D] x [N,D] -> [N,1].
    pub fn cosine_rows(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("cosine_rows", &a, &b));
        }
        let (n, d) = a.shape();
        let va = &self.nodes[a.id].value;
        let vb = &self.nodes[b.id].value;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let ra = &va[i * d..(i + 1) * d];
            let rb = &vb[i * d..(i + 1) * d];
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            let na = math::sqrt(ra.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            let nb = math::sqrt(rb.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            out.push(dot / (na * nb));
        }
        Ok(self.push(Op::CosRows(a.id, b.id), n, 1, out))
    }

    /// Diagonal-Gaussian log density of `actions` under (mean, log_std):
    /// mean [B,A], log_std [1,A] -> [B,1].
    pub fn gaussian_log_prob(
        &mut self,
        mean: Tensor,
        log_std: Tensor,
        actions: &[f64],
    ) -> Result<Tensor, CoreError> {
        if log_std.rows != 1 || log_std.cols != mean.cols {
            return Err(shape_err("gaussian_log_prob", &mean, &log_std));
        }
        if actions.len() != mean.len() {
            return Err(CoreError::ShapeMismatch {
                op: "gaussian_log_prob",
                lhs: mean.shape(),
                rhs: (actions.len() / mean.cols.max(1), mean.cols),
            });
        }
        let (bsz, adim) = mean.shape();
        let vm = &self.nodes[mean.id].value;
        let vs = &self.nodes[log_std.id].value;
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
        let mut out = Vec::with_capacity(bsz);
        for b in 0..bsz {
            let mut lp = 0.0;
            for j in 0..adim {
                let ls = vs[j];
                let z = (actions[b * adim + j] - vm[b * adim + j]) * math::exp(-ls);
                lp += -0.5 * z * z - ls - HALF_LN_2PI;
            }
            out.push(lp);
        }
        Ok(self.push(
            Op::GaussLogProb { mean: mean.id, log_std: log_std.id, actions: actions.to_vec() },
            bsz,
            1,
            out,
        ))
    }

    /// Elementwise clamp; gradient passes only strictly inside (lo, hi).
    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> Tensor {
        let v = self.map(a, |x| x.clamp(lo, hi));
        self.push(Op::Clamp { input: a.id, lo, hi }, a.rows, a.cols, v)
    }

    /// Elementwise minimum; gradient routes to the smaller side (ties to
    /// the first argument).
    pub fn min_elem(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.shape() != b.shape() {
            return Err(shape_err("min_elem", &a, &b));
        }
        let v = self.zip(a, b, |x, y| if x <= y { x } else { y });
        Ok(self.push(Op::MinElem(a.id, b.id), a.rows, a.cols, v))
    }

    /// [N,D1] ⊕ [N,D2] -> [N,D1+D2].
    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, CoreError> {
        if a.rows != b.rows {
            return Err(shape_err("concat_cols", &a, &b));
        }
        let (n, d1, d2) = (a.rows, a.cols, b.cols);
        let va = &self.nodes[a.id].value;
        let vb = &self.nodes[b.id].value;
        let mut v = Vec::with_capacity(n * (d1 + d2));
        for i in 0..n {
            v.extend_from_slice(&va[i * d1..(i + 1) * d1]);
            v.extend_from_slice(&vb[i * d2..(i + 1) * d2]);
        }
        Ok(self.push(Op::ConcatCols(a.id, b.id), n, d1 + d2, v))
    }

    /// Identity value, zero gradient (the SimSiam stop-gradient).
    pub fn stop_grad(&mut self, a: Tensor) -> Tensor {
        let v = self.nodes[a.id].value.clone();
        self.push(Op::StopGrad, a.rows, a.cols, v)
    }

    /// Repeat each row `times` consecutive times: [S,D] -> [S*times,D]
    /// (broadcasts per-segment globals back over their points).
    pub fn repeat_rows(&mut self, a: Tensor, times: usize) -> Tensor {
        debug_assert!(times > 0);
        let d = a.cols;
        let va = &self.nodes[a.id].value;
        let mut v = Vec::with_capacity(a.rows * times * d);
        for r in 0..a.rows {
            for _ in 0..times {
                v.extend_from_slice(&va[r * d..(r + 1) * d]);
            }
        }
        self.push(Op::RepeatRows { input: a.id, times }, a.rows * times, d, v)
    }

    /// Contiguous row slice [start, start+n).
    pub fn slice_rows(&mut self, a: Tensor, start: usize, n: usize) -> Result<Tensor, CoreError> {
        if start + n > a.rows {
            return Err(CoreError::ShapeMismatch {
                op: "slice_rows",
                lhs: a.shape(),
                rhs: (start + n, a.cols),
            });
        }
        let d = a.cols;
        let v = self.nodes[a.id].value[start * d..(start + n) * d].to_vec();
        Ok(self.push(Op::SliceRows { input: a.id, start }, n, d, v))
    }

    /// Same data, new shape (row-major).
    pub fn reshape(&mut self, a: Tensor, rows: usize, cols: usize) -> Result<Tensor, CoreError> {
        if rows * cols != a.len() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                lhs: a.shape(),
                rhs: (rows, cols),
            });
        }
        let v = self.nodes[a.id].value.clone();
        Ok(self.push(Op::Reshape(a.id), rows, cols, v))
    }

    /// Bidirectional mean squared Chamfer distance between predicted points
    /// [M,3] and a fixed target cloud [N,3]. Gradient flows to `pred` only.
    pub fn chamfer_to_const(&mut self, pred: Tensor, target: &[f64]) -> Result<Tensor, CoreError> {
        if pred.cols != 3 || target.len() % 3 != 0 || target.is_empty() || pred.rows == 0 {
            return Err(CoreError::ShapeMismatch {
                op: "chamfer_to_const",
                lhs: pred.shape(),
                rhs: (target.len() / 3, 3),
            });
        }
        let m = pred.rows;
        let n = target.len() / 3;
        let vp = &self.nodes[pred.id].value;
        let mut nn_fwd = vec![0u32; m];
        let mut sum_fwd = 0.0;
        for j in 0..m {
            let (px, py, pz) = (vp[j * 3], vp[j * 3 + 1], vp[j * 3 + 2]);
            let mut best = f64::INFINITY;
            let mut bi = 0;
            for (i, t) in target.chunks_exact(3).enumerate() {
                let d = (px - t[0]) * (px - t[0])
                    + (py - t[1]) * (py - t[1])
                    + (pz - t[2]) * (pz - t[2]);
                if d < best {
                    best = d;
                    bi = i;
                }
            }
            nn_fwd[j] = bi as u32;
            sum_fwd += best;
        }
        let mut nn_bwd = vec![0u32; n];
        let mut sum_bwd = 0.0;
        for (i, t) in target.chunks_exact(3).enumerate() {
            let mut best = f64::INFINITY;
            let mut bj = 0;
            for j in 0..m {
                let d = (t[0] - vp[j * 3]) * (t[0] - vp[j * 3])
                    + (t[1] - vp[j * 3 + 1]) * (t[1] - vp[j * 3 + 1])
                    + (t[2] - vp[j * 3 + 2]) * (t[2] - vp[j * 3 + 2]);
                if d < best {
                    best = d;
                    bj = j;
                }
            }
            nn_bwd[i] = bj as u32;
            sum_bwd += best;
        }
        let cd = sum_fwd / m as f64 + sum_bwd / n as f64;
        Ok(self.push(
            Op::Chamfer { pred: pred.id, target: target.to_vec(), nn_fwd, nn_bwd },
            1,
            1,
            vec![cd],
        ))
    }

    fn map(&self, a: Tensor, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes[a.id].value.iter().map(|&x| f(x)).collect()
    }

    fn zip(&self, a: Tensor, b: Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes[a.id]
            .value
            .iter()
            .zip(&self.nodes[b.id].value)
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    /// Reverse pass from a scalar loss; parameter gradients accumulate into
    /// `store` (no implicit zeroing).
    pub fn backward(&self, loss: Tensor, store: &mut ParamStore) -> Result<(), CoreError> {
        if loss.len() != 1 {
            return Err(CoreError::ShapeMismatch {
                op: "backward",
                lhs: loss.shape(),
                rhs: (1, 1),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.id] = Some(vec![1.0]);

        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(p) = param {
                        store.accumulate_grad(*p, &g);
                    }
                }
                Op::Add(a, b) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi);
                    add_to(&mut grads, *b, self.nodes[*b].value.len(), &g, |gi, _| gi);
                }
                Op::AddRow(a, row) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi);
                    let d = node.cols;
                    let gr = grads[*row].get_or_insert_with(|| vec![0.0; d]);
                    for r in 0..node.rows {
                        for j in 0..d {
                            gr[j] += g[r * d + j];
                        }
                    }
                }
                Op::Sub(a, b) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi);
                    add_to(&mut grads, *b, self.nodes[*b].value.len(), &g, |gi, _| -gi);
                }
                Op::Mul(a, b) => {
                    let vb = &self.nodes[*b].value;
                    add_to(&mut grads, *a, vb.len(), &g, |gi, k| gi * vb[k]);
                    let va = &self.nodes[*a].value;
                    add_to(&mut grads, *b, va.len(), &g, |gi, k| gi * va[k]);
                }
                Op::Neg(a) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| -gi);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi * c);
                }
                Op::AddConst(a) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi);
                }
                Op::MatMul { a, b, k } => {
                    let (n_rows, m, k) = (node.rows, node.cols, *k);
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    {
                        let ga = grads[*a].get_or_insert_with(|| vec![0.0; n_rows * k]);
                        // dA = dC * B^T
                        for i2 in 0..n_rows {
                            for kk in 0..k {
                                let mut s = 0.0;
                                let grow = &g[i2 * m..(i2 + 1) * m];
                                let brow = &vb[kk * m..(kk + 1) * m];
                                for j in 0..m {
                                    s += grow[j] * brow[j];
                                }
                                ga[i2 * k + kk] += s;
                            }
                        }
                    }
                    {
                        let gb = grads[*b].get_or_insert_with(|| vec![0.0; k * m]);
                        // dB = A^T * dC
                        for i2 in 0..n_rows {
                            let grow = &g[i2 * m..(i2 + 1) * m];
                            let arow = &va[i2 * k..(i2 + 1) * k];
                            for (kk, &av) in arow.iter().enumerate() {
                                let gbrow = &mut gb[kk * m..(kk + 1) * m];
                                for j in 0..m {
                                    gbrow[j] += av * grow[j];
                                }
                            }
                        }
                    }
                }
                Op::Gelu(a) => {
                    let va = &self.nodes[*a].value;
                    add_to(&mut grads, *a, va.len(), &g, |gi, k| gi * math::gelu_grad(va[k]));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    add_to(&mut grads, *a, y.len(), &g, |gi, k| gi * (1.0 - y[k] * y[k]));
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    add_to(&mut grads, *a, y.len(), &g, |gi, k| gi * y[k]);
                }
                Op::Ln(a) => {
                    let va = &self.nodes[*a].value;
                    add_to(&mut grads, *a, va.len(), &g, |gi, k| gi / va[k]);
                }
                Op::Sum(a) => {
                    let len = self.nodes[*a].value.len();
                    let gs = g[0];
                    let ga = grads[*a].get_or_insert_with(|| vec![0.0; len]);
                    ga.iter_mut().for_each(|x| *x += gs);
                }
                Op::Mean(a) => {
                    let len = self.nodes[*a].value.len();
                    let gs = g[0] / len as f64;
                    let ga = grads[*a].get_or_insert_with(|| vec![0.0; len]);
                    ga.iter_mut().for_each(|x| *x += gs);
                }
                Op::MaxPoolSeg { input, argmax } => {
                    let d = node.cols;
                    let len = self.nodes[*input].value.len();
                    let gi = grads[*input].get_or_insert_with(|| vec![0.0; len]);
                    for s in 0..node.rows {
                        for j in 0..d {
                            let row = argmax[s * d + j] as usize;
                            gi[row * d + j] += g[s * d + j];
                        }
                    }
                }
                Op::SoftmaxXent { logits, labels, probs } => {
                    let c = self.nodes[*logits].cols;
                    let nrows = labels.len();
                    let gs = g[0] / nrows as f64;
                    let gl = grads[*logits].get_or_insert_with(|| vec![0.0; nrows * c]);
                    for i2 in 0..nrows {
                        for j in 0..c {
                            let y = if labels[i2] as usize == j { 1.0 } else { 0.0 };
                            gl[i2 * c + j] += gs * (probs[i2 * c + j] - y);
                        }
                    }
                }
                Op::Mse(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let len = va.len();
                    let gs = 2.0 * g[0] / len as f64;
                    let diff: Vec<f64> = va.iter().zip(vb).map(|(x, y)| gs * (x - y)).collect();
                    add_to(&mut grads, *a, len, &diff, |d, _| d);
                    add_to(&mut grads, *b, len, &diff, |d, _| -d);
                }
                Op::CosRows(a, b) => {
                    let d = self.nodes[*a].cols;
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let len = va.len();
                    let mut da = vec![0.0; len];
                    let mut db = vec![0.0; len];
                    for i2 in 0..node.rows {
                        let ra = &va[i2 * d..(i2 + 1) * d];
                        let rb = &vb[i2 * d..(i2 + 1) * d];
                        let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                        let na = math::sqrt(ra.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
                        let nb = math::sqrt(rb.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
                        let cosv = dot / (na * nb);
                        let gi = g[i2];
                        for k in 0..d {
                            da[i2 * d + k] = gi * (rb[k] / (na * nb) - cosv * ra[k] / (na * na));
                            db[i2 * d + k] = gi * (ra[k] / (na * nb) - cosv * rb[k] / (nb * nb));
                        }
                    }
                    add_to(&mut grads, *a, len, &da, |x, _| x);
                    add_to(&mut grads, *b, len, &db, |x, _| x);
                }
                Op::GaussLogProb { mean, log_std, actions } => {
                    let adim = self.nodes[*mean].cols;
                    let bsz = node.rows;
                    let vm = &self.nodes[*mean].value;
                    let vs = &self.nodes[*log_std].value;
                    {
                        let gm = grads[*mean].get_or_insert_with(|| vec![0.0; bsz * adim]);
                        for b2 in 0..bsz {
                            for j in 0..adim {
                                let inv_s = math::exp(-vs[j]);
                                let z = (actions[b2 * adim + j] - vm[b2 * adim + j]) * inv_s;
                                gm[b2 * adim + j] += g[b2] * z * inv_s;
                            }
                        }
                    }
                    {
                        let gl = grads[*log_std].get_or_insert_with(|| vec![0.0; adim]);
                        for b2 in 0..bsz {
                            for j in 0..adim {
                                let inv_s = math::exp(-vs[j]);
                                let z = (actions[b2 * adim + j] - vm[b2 * adim + j]) * inv_s;
                                gl[j] += g[b2] * (z * z - 1.0);
                            }
                        }
                    }
                }
                Op::Clamp { input, lo, hi } => {
                    let va = &self.nodes[*input].value;
                    let (lo, hi) = (*lo, *hi);
                    add_to(&mut grads, *input, va.len(), &g, |gi, k| {
                        if va[k] > lo && va[k] < hi {
                            gi
                        } else {
                            0.0
                        }
                    });
                }
                Op::MinElem(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    add_to(&mut grads, *a, va.len(), &g, |gi, k| {
                        if va[k] <= vb[k] {
                            gi
                        } else {
                            0.0
                        }
                    });
                    add_to(&mut grads, *b, vb.len(), &g, |gi, k| {
                        if va[k] <= vb[k] {
                            0.0
                        } else {
                            gi
                        }
                    });
                }
                Op::ConcatCols(a, b) => {
                    let (d1, d2) = (self.nodes[*a].cols, self.nodes[*b].cols);
                    let rows = node.rows;
                    {
                        let ga = grads[*a].get_or_insert_with(|| vec![0.0; rows * d1]);
                        for r in 0..rows {
                            for j in 0..d1 {
                                ga[r * d1 + j] += g[r * (d1 + d2) + j];
                            }
                        }
                    }
                    {
                        let gb = grads[*b].get_or_insert_with(|| vec![0.0; rows * d2]);
                        for r in 0..rows {
                            for j in 0..d2 {
                                gb[r * d2 + j] += g[r * (d1 + d2) + d1 + j];
                            }
                        }
                    }
                }
                Op::StopGrad => {}
                Op::RepeatRows { input, times } => {
                    let d = node.cols;
                    let src_rows = self.nodes[*input].rows;
                    let gi = grads[*input].get_or_insert_with(|| vec![0.0; src_rows * d]);
                    for r in 0..src_rows {
                        for t in 0..*times {
                            let row = (r * times + t) * d;
                            for j in 0..d {
                                gi[r * d + j] += g[row + j];
                            }
                        }
                    }
                }
                Op::SliceRows { input, start } => {
                    let d = node.cols;
                    let len = self.nodes[*input].value.len();
                    let gi = grads[*input].get_or_insert_with(|| vec![0.0; len]);
                    for (k, gv) in g.iter().enumerate() {
                        gi[start * d + k] += gv;
                    }
                }
                Op::Reshape(a) => {
                    add_to(&mut grads, *a, self.nodes[*a].value.len(), &g, |gi, _| gi);
                }
                Op::Chamfer { pred, target, nn_fwd, nn_bwd } => {
                    let m = nn_fwd.len();
                    let nt = nn_bwd.len();
                    let vp = &self.nodes[*pred].value;
                    let gp = grads[*pred].get_or_insert_with(|| vec![0.0; m * 3]);
                    let gs = g[0];
                    for j in 0..m {
                        let t = &target[nn_fwd[j] as usize * 3..nn_fwd[j] as usize * 3 + 3];
                        for k in 0..3 {
                            gp[j * 3 + k] += gs * 2.0 / m as f64 * (vp[j * 3 + k] - t[k]);
                        }
                    }
                    for i2 in 0..nt {
                        let j = nn_bwd[i2] as usize;
                        let t = &target[i2 * 3..i2 * 3 + 3];
                        for k in 0..3 {
                            gp[j * 3 + k] += gs * 2.0 / nt as f64 * (vp[j * 3 + k] - t[k]);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Accumulate `f(g[k], k)` into `grads[id][k]`, allocating on first touch.
fn add_to(
    grads: &mut [Option<Vec<f64>>],
    id: usize,
    len: usize,
    g: &[f64],
    f: impl Fn(f64, usize) -> f64,
) {
    let buf = grads[id].get_or_insert_with(|| vec![0.0; len]);
    for k in 0..g.len() {
        buf[k] += f(g[k], k);
    }
}
