//! Parameterised layers built on [`Graph`] operations.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{shape_err, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Uniform Xavier/Glorot initialisation for an `out x inp` weight.
pub fn xavier_uniform<F: Real, R: Rng + ?Sized>(rng: &mut R, out: usize, inp: usize) -> Tensor<F> {
    let a = (6.0 / (inp + out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    let data = (0..out * inp).map(|_| F::of(dist.sample(rng))).collect();
    Tensor::matrix(out, inp, data).expect("sized")
}

/// A random `n x n` orthogonal matrix (Gram-Schmidt on a Gaussian draw).
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut q: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let d: f64 = (0..n).map(|k| q[i][k] * q[j][k]).sum();
                for k in 0..n {
                    q[i][k] -= d * q[j][k];
                }
            }
            let norm = q[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q[i].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            return q.into_iter().flatten().collect();
        }
    }
}

/// Fully connected layer `y = x W^T + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), xavier_uniform(rng, out_dim, in_dim))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    /// Looks up an existing layer by name (e.g. after loading a checkpoint).
    pub fn bind<F: Real>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        let w = lookup(store, &format!("{name}.w"))?;
        let b = lookup(store, &format!("{name}.b"))?;
        let shape = store.value(w).shape();
        Ok(Self { w, b, in_dim: shape[1], out_dim: shape[0] })
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId> {
        g.linear(store, x, self.w, Some(self.b))
    }
}

pub(crate) fn lookup<F: Real>(store: &ParamStore<F>, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| crate::error::NnError::Format(format!("missing parameter {name}")))
}

/// Affine parameters of a layer normalisation.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Result<Self> {
        let gain = store.add(format!("{name}.gain"), Tensor::full(vec![dim], F::one()))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![dim]))?;
        Ok(Self { gain, bias })
    }

    pub fn bind<F: Real>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        Ok(Self { gain: lookup(store, &format!("{name}.gain"))?, bias: lookup(store, &format!("{name}.bias"))? })
    }

    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId> {
        g.layer_norm(store, x, self.gain, self.bias)
    }
}

/// One direction of one LSTM layer. Gate order in the stacked weights is
/// `[input | forget | candidate | output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirection {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmDirection {
    /// Xavier input weights, orthogonal recurrent blocks per gate, zero bias
    /// except 1 on the forget gate.
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden;
        let w_ih = store.add(format!("{name}.w_ih"), xavier_uniform(rng, 4 * h, in_dim))?;
        let mut whh = Vec::with_capacity(4 * h * h);
        for _ in 0..4 {
            whh.extend(orthogonal(rng, h).into_iter().map(F::of));
        }
        let w_hh = store.add(format!("{name}.w_hh"), Tensor::matrix(4 * h, h, whh)?)?;
        let mut b = vec![F::zero(); 4 * h];
        b[h..2 * h].iter_mut().for_each(|v| *v = F::one());
        let b = store.add(format!("{name}.b"), Tensor::new(vec![4 * h], b)?)?;
        Ok(Self { w_ih, w_hh, b, in_dim, hidden })
    }

    pub fn bind<F: Real>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        let w_ih = lookup(store, &format!("{name}.w_ih"))?;
        let w_hh = lookup(store, &format!("{name}.w_hh"))?;
        let b = lookup(store, &format!("{name}.b"))?;
        let s = store.value(w_ih).shape();
        Ok(Self { w_ih, w_hh, b, in_dim: s[1], hidden: s[0] / 4 })
    }

    /// Runs over a time-major sequence (`steps * batch` rows). Returns the
    /// hidden state at each step in *time order* regardless of direction.
    pub fn run<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
        steps: usize,
        batch: usize,
        reverse: bool,
    ) -> Result<Vec<NodeId>> {
        let h = self.hidden;
        // input projection for all steps at once
        let proj = g.linear(store, x, self.w_ih, Some(self.b))?;
        let mut hs = vec![None; steps];
        let mut state: Option<(NodeId, NodeId)> = None;
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let pre = g.slice_rows(proj, t * batch, batch)?;
            let (gates, c_prev) = match state {
                None => (pre, g.zeros(batch, h)),
                Some((hp, cp)) => {
                    let rec = g.linear(store, hp, self.w_hh, None)?;
                    (g.add(pre, rec)?, cp)
                }
            };
            let hc = g.lstm_cell(gates, c_prev)?;
            let ht = g.slice_cols(hc, 0, h)?;
            let ct = g.slice_cols(hc, h, h)?;
            hs[t] = Some(ht);
            state = Some((ht, ct));
        }
        Ok(hs.into_iter().map(|n| n.expect("every step visited")).collect())
    }
}

/// Outputs of a bidirectional stack.
#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// `steps * batch` rows of `[h_fwd | h_bwd]`, time-major.
    pub sequence: NodeId,
    /// Top-layer forward state after the last step.
    pub final_forward: NodeId,
    /// Top-layer backward state after processing step 0.
    pub final_backward: NodeId,
}

/// Stacked bidirectional LSTM; layer `k` consumes layer `k-1`'s
/// concatenated outputs. States start at zero.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmDirection, LstmDirection)>,
}

impl BiLstm {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(num_layers);
        for k in 0..num_layers {
            let d = if k == 0 { in_dim } else { 2 * hidden };
            let f = LstmDirection::new(store, &format!("{name}.l{k}.fwd"), d, hidden, rng)?;
            let b = LstmDirection::new(store, &format!("{name}.l{k}.bwd"), d, hidden, rng)?;
            layers.push((f, b));
        }
        Ok(Self { layers })
    }

    pub fn bind<F: Real>(store: &ParamStore<F>, name: &str, num_layers: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|k| {
                Ok((
                    LstmDirection::bind(store, &format!("{name}.l{k}.fwd"))?,
                    LstmDirection::bind(store, &format!("{name}.l{k}.bwd"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].0.hidden
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
        steps: usize,
        batch: usize,
    ) -> Result<BiLstmOutput> {
        if steps == 0 {
            return Err(shape_err("bidirectional LSTM needs a non-empty sequence"));
        }
        if g.value(x).rows() != steps * batch {
            return Err(shape_err(format!(
                "sequence has {} rows, expected {steps} x {batch}",
                g.value(x).rows()
            )));
        }
        let mut input = x;
        let mut last = None;
        for (fwd, bwd) in &self.layers {
            let hf = fwd.run(g, store, input, steps, batch, false)?;
            let hb = bwd.run(g, store, input, steps, batch, true)?;
            let f_all = g.concat_rows(&hf)?;
            let b_all = g.concat_rows(&hb)?;
            input = g.concat_cols(&[f_all, b_all])?;
            last = Some((hf[steps - 1], hb[0]));
        }
        let (final_forward, final_backward) = last.ok_or_else(|| shape_err("stack has no layers"))?;
        Ok(BiLstmOutput { sequence: input, final_forward, final_backward })
    }
}
