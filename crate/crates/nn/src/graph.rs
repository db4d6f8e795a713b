//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass. All
//! values are 2-D (`rows x cols`); sequences are laid out time-major with one
//! row per (step, sample). Parameters live in a [`ParamStore`] that is passed
//! to each operation, so the same store can be read during forward and
//! mutated by [`Graph::backward`].

use crate::error::{shape_err, NnError, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{matmul_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

pub const LEAKY_SLOPE: f64 = 0.01;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A scalar objective evaluated on one node. `eval` returns the loss and
/// writes `dloss/dpred` into `grad` (same length as `pred`).
pub trait Objective<F: Real> {
    fn eval(&self, pred: &[F], cols: usize, grad: &mut [F]) -> Result<F>;
}

/// `scale * sum((pred - target)^2)`.
#[derive(Debug, Clone)]
pub struct SquaredError<F> {
    pub target: Vec<F>,
    pub scale: F,
}

impl<F: Real> Objective<F> for SquaredError<F> {
    fn eval(&self, pred: &[F], _cols: usize, grad: &mut [F]) -> Result<F> {
        if pred.len() != self.target.len() {
            return Err(shape_err(format!(
                "squared error: prediction has {} values, target {}",
                pred.len(),
                self.target.len()
            )));
        }
        let two = F::of(2.0);
        let mut acc = F::zero();
        for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(&self.target) {
            let d = p - t;
            acc += d * d;
            *g = two * self.scale * d;
        }
        Ok(acc * self.scale)
    }
}

enum Op<F> {
    Input,
    Linear { x: NodeId, w: ParamId, b: Option<ParamId> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, F),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId),
    Softplus(NodeId),
    /// Output `[h | c]`; cache holds activated gates followed by `tanh(c)`.
    LstmCell { gates: NodeId, c_prev: NodeId, cache: Vec<F> },
    SliceCols { a: NodeId, start: usize },
    SliceRows { a: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    /// Cache holds the normalised input followed by one `1/std` per row.
    LayerNorm { x: NodeId, gain: ParamId, bias: ParamId, cache: Vec<F> },
    Sum(NodeId),
    /// Gradient computed at forward time.
    Loss { a: NodeId, grad: Vec<F> },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// The recorded computation of one forward pass.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> F {
        self.nodes[id.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value produced by forward op");
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = &self.nodes[id.0].value;
        (v.rows(), v.cols())
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant `rows x cols` input.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<F>) -> Result<NodeId> {
        let t = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(t, Op::Input, false))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Tensor::zeros(vec![rows, cols]), Op::Input, false)
    }

    /// `y = x W^T + b` with `W` stored `out x in`.
    pub fn linear(
        &mut self,
        store: &ParamStore<F>,
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    ) -> Result<NodeId> {
        let (n, k) = self.dims(x);
        let wt = store.value(w);
        if wt.shape().len() != 2 || wt.shape()[1] != k {
            return Err(shape_err(format!("linear: weight {:?} cannot take {k} inputs", wt.shape())));
        }
        let out = wt.shape()[0];
        let mut y = vec![F::zero(); n * out];
        matmul_into(self.value(x).data(), n, k, false, wt.data(), out, true, F::zero(), &mut y);
        if let Some(b) = b {
            let bv = store.value(b).data();
            if bv.len() != out {
                return Err(shape_err(format!("linear: bias has {} values, expected {out}", bv.len())));
            }
            for row in y.chunks_exact_mut(out) {
                for (v, &bb) in row.iter_mut().zip(bv) {
                    *v += bb;
                }
            }
        }
        Ok(self.push(Tensor::matrix(n, out, y)?, Op::Linear { x, w, b }, true))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, what: &str) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(shape_err(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.binary(a, b, "add")?;
        let y = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, y)?, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.binary(a, b, "mul")?;
        let y = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, y)?, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, s: F) -> NodeId {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x *= s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(F) -> F, op: Op<F>) -> NodeId {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x = f(*x));
        let ng = self.ng(a);
        self.push(v, op, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId) -> NodeId {
        let slope = F::of(LEAKY_SLOPE);
        self.unary(a, move |x| if x > F::zero() { x } else { slope * x }, Op::LeakyRelu(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Pointwise LSTM update. `gates` is `B x 4H` pre-activations laid out
    /// `[input | forget | candidate | output]`; `c_prev` is `B x H`.
    /// Returns a `B x 2H` node `[h | c]`.
    pub fn lstm_cell(&mut self, gates: NodeId, c_prev: NodeId) -> Result<NodeId> {
        let (b, g4) = self.dims(gates);
        let (bc, h) = self.dims(c_prev);
        if g4 != 4 * h || b != bc {
            return Err(shape_err(format!("lstm cell: gates {b}x{g4} with state {bc}x{h}")));
        }
        let gv = self.value(gates).data();
        let cv = self.value(c_prev).data();
        // cache: per row [i f g o tanh(c)]
        let mut cache = vec![F::zero(); b * 5 * h];
        let mut out = vec![F::zero(); b * 2 * h];
        for r in 0..b {
            let gr = &gv[r * 4 * h..(r + 1) * 4 * h];
            let cr = &cv[r * h..(r + 1) * h];
            let ca = &mut cache[r * 5 * h..(r + 1) * 5 * h];
            let o_row = &mut out[r * 2 * h..(r + 1) * 2 * h];
            for j in 0..h {
                let i = sigmoid(gr[j]);
                let f = sigmoid(gr[h + j]);
                let g = gr[2 * h + j].tanh();
                let o = sigmoid(gr[3 * h + j]);
                let c = f * cr[j] + i * g;
                let tc = c.tanh();
                ca[j] = i;
                ca[h + j] = f;
                ca[2 * h + j] = g;
                ca[3 * h + j] = o;
                ca[4 * h + j] = tc;
                o_row[j] = o * tc;
                o_row[h + j] = c;
            }
        }
        let ng = self.ng(gates) || self.ng(c_prev);
        Ok(self.push(Tensor::matrix(b, 2 * h, out)?, Op::LstmCell { gates, c_prev, cache }, ng))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(shape_err(format!("slice_cols {start}+{len} of {c}")));
        }
        let src = self.value(a).data();
        let mut y = Vec::with_capacity(r * len);
        for row in src.chunks_exact(c) {
            y.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(r, len, y)?, Op::SliceCols { a, start }, ng))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.dims(a);
        if start + len > r {
            return Err(shape_err(format!("slice_rows {start}+{len} of {r}")));
        }
        let y = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(len, c, y)?, Op::SliceRows { a, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or_else(|| shape_err("concat_cols of nothing"))?;
        let rows = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(shape_err(format!("concat_cols: {r} rows vs {rows}")));
            }
            total += c;
        }
        let mut y = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                y.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::matrix(rows, total, y)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or_else(|| shape_err("concat_rows of nothing"))?;
        let cols = self.dims(first).1;
        let mut y = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if c != cols {
                return Err(shape_err(format!("concat_rows: {c} cols vs {cols}")));
            }
            y.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::matrix(rows, cols, y)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Per-row standardisation followed by `gain * x_hat + bias`.
    pub fn layer_norm(
        &mut self,
        store: &ParamStore<F>,
        x: NodeId,
        gain: ParamId,
        bias: ParamId,
    ) -> Result<NodeId> {
        let (r, c) = self.dims(x);
        if c < 2 {
            return Err(shape_err("layer norm needs at least two features"));
        }
        let (gv, bv) = (store.value(gain).data(), store.value(bias).data());
        if gv.len() != c || bv.len() != c {
            return Err(shape_err(format!("layer norm: affine params sized {}/{} for {c} features", gv.len(), bv.len())));
        }
        let eps = F::of(LAYER_NORM_EPS);
        let nf = F::of(c as f64);
        let src = self.value(x).data();
        let mut cache = vec![F::zero(); r * c + r];
        let mut y = vec![F::zero(); r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<F>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
            let rstd = F::one() / (var + eps).sqrt();
            for j in 0..c {
                let xh = (row[j] - mean) * rstd;
                cache[i * c + j] = xh;
                y[i * c + j] = xh * gv[j] + bv[j];
            }
            cache[r * c + i] = rstd;
        }
        Ok(self.push(Tensor::matrix(r, c, y)?, Op::LayerNorm { x, gain, bias, cache }, true))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Tensor::row(vec![s]), Op::Sum(a), ng)
    }

    /// Evaluates a scalar objective on `a`.
    pub fn loss(&mut self, a: NodeId, objective: &dyn Objective<F>) -> Result<NodeId> {
        let v = self.value(a);
        let mut grad = vec![F::zero(); v.len()];
        let l = objective.eval(v.data(), v.cols(), &mut grad)?;
        let ng = self.ng(a);
        Ok(self.push(Tensor::row(vec![l]), Op::Loss { a, grad }, ng))
    }

    pub fn squared_error(&mut self, a: NodeId, target: Vec<F>, scale: F) -> Result<NodeId> {
        self.loss(a, &SquaredError { target, scale })
    }

    /// Back-propagates from the scalar node `loss`, adding parameter
    /// gradients into `store` (gradients accumulate; zero them between
    /// steps with [`ParamStore::zero_grad`]).
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<F>) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::Usage("backward called before any forward pass".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(shape_err("backward needs a scalar loss node"));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &dy, &mut grads, store);
        }
        Ok(())
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<F>>], id: NodeId) -> Option<&'g mut Vec<F>> {
        if !self.ng(id) {
            return None;
        }
        let n = self.nodes[id.0].value.len();
        Some(grads[id.0].get_or_insert_with(|| vec![F::zero(); n]))
    }

    fn propagate(&self, node: &Node<F>, dy: &[F], grads: &mut [Option<Vec<F>>], store: &mut ParamStore<F>) {
        let (rows, cols) = (node.value.rows(), node.value.cols());
        match &node.op {
            Op::Input => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let k = xv.cols();
                {
                    let p = store.param_mut(*w);
                    matmul_into(dy, cols, rows, true, xv.data(), k, false, F::one(), p.grad.data_mut());
                }
                if let Some(b) = b {
                    let g = store.param_mut(*b).grad.data_mut();
                    for row in dy.chunks_exact(cols) {
                        for (gg, &d) in g.iter_mut().zip(row) {
                            *gg += d;
                        }
                    }
                }
                let wv = store.value(*w).data();
                if let Some(dx) = self.acc(grads, *x) {
                    matmul_into(dy, rows, cols, false, wv, k, false, F::one(), dx);
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if let Some(g) = self.acc(grads, id) {
                        g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(g) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        g[i] += dy[i] * bv[i];
                    }
                }
                if let Some(g) = self.acc(grads, *b) {
                    for i in 0..g.len() {
                        g[i] += dy[i] * av[i];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(g) = self.acc(grads, *a) {
                    g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d * *s);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(g) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        g[i] += dy[i] * y[i] * (F::one() - y[i]);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(g) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        g[i] += dy[i] * (F::one() - y[i] * y[i]);
                    }
                }
            }
            Op::LeakyRelu(a) => {
                let x = self.value(*a).data();
                let slope = F::of(LEAKY_SLOPE);
                if let Some(g) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        g[i] += if x[i] > F::zero() { dy[i] } else { dy[i] * slope };
                    }
                }
            }
            Op::Softplus(a) => {
                let x = self.value(*a).data();
                if let Some(g) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        g[i] += dy[i] * sigmoid(x[i]);
                    }
                }
            }
            Op::LstmCell { gates, c_prev, cache } => {
                let h = cols / 2;
                let cp = self.value(*c_prev).data();
                let mut dgates = vec![F::zero(); rows * 4 * h];
                let mut dcp = vec![F::zero(); rows * h];
                let one = F::one();
                for r in 0..rows {
                    let ca = &cache[r * 5 * h..(r + 1) * 5 * h];
                    let d = &dy[r * 2 * h..(r + 1) * 2 * h];
                    let dg = &mut dgates[r * 4 * h..(r + 1) * 4 * h];
                    for j in 0..h {
                        let (i, f, g, o, tc) = (ca[j], ca[h + j], ca[2 * h + j], ca[3 * h + j], ca[4 * h + j]);
                        let dh = d[j];
                        let dc = d[h + j] + dh * o * (one - tc * tc);
                        dg[j] = dc * g * i * (one - i);
                        dg[h + j] = dc * cp[r * h + j] * f * (one - f);
                        dg[2 * h + j] = dc * i * (one - g * g);
                        dg[3 * h + j] = dh * tc * o * (one - o);
                        dcp[r * h + j] = dc * f;
                    }
                }
                if let Some(g) = self.acc(grads, *gates) {
                    g.iter_mut().zip(&dgates).for_each(|(g, &d)| *g += d);
                }
                if let Some(g) = self.acc(grads, *c_prev) {
                    g.iter_mut().zip(&dcp).for_each(|(g, &d)| *g += d);
                }
            }
            Op::SliceCols { a, start } => {
                let ac = self.value(*a).cols();
                if let Some(g) = self.acc(grads, *a) {
                    for r in 0..rows {
                        for j in 0..cols {
                            g[r * ac + start + j] += dy[r * cols + j];
                        }
                    }
                }
            }
            Op::SliceRows { a, start } => {
                if let Some(g) = self.acc(grads, *a) {
                    let off = start * cols;
                    g[off..off + dy.len()].iter_mut().zip(dy).for_each(|(g, &d)| *g += d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if let Some(g) = self.acc(grads, p) {
                        for r in 0..rows {
                            for j in 0..pc {
                                g[r * pc + j] += dy[r * cols + off + j];
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(g) = self.acc(grads, p) {
                        g.iter_mut().zip(&dy[off..off + n]).for_each(|(g, &d)| *g += d);
                    }
                    off += n;
                }
            }
            Op::LayerNorm { x, gain, bias, cache } => {
                let gv = store.value(*gain).data().to_vec();
                {
                    let gg = store.param_mut(*gain).grad.data_mut();
                    for r in 0..rows {
                        for j in 0..cols {
                            gg[j] += dy[r * cols + j] * cache[r * cols + j];
                        }
                    }
                }
                {
                    let bg = store.param_mut(*bias).grad.data_mut();
                    for r in 0..rows {
                        for j in 0..cols {
                            bg[j] += dy[r * cols + j];
                        }
                    }
                }
                if let Some(g) = self.acc(grads, *x) {
                    let nf = F::of(cols as f64);
                    for r in 0..rows {
                        let rstd = cache[rows * cols + r];
                        let xh = &cache[r * cols..(r + 1) * cols];
                        let d = &dy[r * cols..(r + 1) * cols];
                        let mut m1 = F::zero();
                        let mut m2 = F::zero();
                        for j in 0..cols {
                            let dxh = d[j] * gv[j];
                            m1 += dxh;
                            m2 += dxh * xh[j];
                        }
                        m1 = m1 / nf;
                        m2 = m2 / nf;
                        for j in 0..cols {
                            let dxh = d[j] * gv[j];
                            g[r * cols + j] += rstd * (dxh - m1 - xh[j] * m2);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    g.iter_mut().for_each(|g| *g += dy[0]);
                }
            }
            Op::Loss { a, grad } => {
                if let Some(g) = self.acc(grads, *a) {
                    g.iter_mut().zip(grad).for_each(|(g, &d)| *g += d * dy[0]);
                }
            }
        }
    }
}
