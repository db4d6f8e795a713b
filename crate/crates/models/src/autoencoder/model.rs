//! Bi-LSTM encoder/decoder between `T x 3D` feature sequences and a
//! fixed-size latent vector.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uasim_core::rng::stream_rng;
use uasim_core::FeatureSeq;
use uasim_nn::{gradient_check, BiLstm, Checkpoint, Dense, GradCheckReport, Graph, NodeId, ParamStore, Real};

use super::loss::AeObjective;
use crate::error::{invalid, ModelError, Result};

pub const CHECKPOINT_KIND: &str = "autoencoder";

/// Inference batch size; only affects memory, not results.
const INFERENCE_BATCH: usize = 64;

/// Lower bound on the per-feature spread used for input standardisation.
/// Near-constant features (the `cos = 1` of taps that are almost always
/// empty) are centred but not blown up.
pub const INPUT_SCALE_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub snapshots: usize,
    pub taps: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    pub layers: usize,
    pub latent_dim: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self { snapshots: 20, taps: 250, hidden: 256, layers: 3, latent_dim: 128 }
    }
}

impl AeConfig {
    pub fn feature_width(&self) -> usize {
        3 * self.taps
    }

    fn validate(&self) -> Result<()> {
        if self.snapshots == 0 || self.taps == 0 || self.hidden == 0 || self.layers == 0 || self.latent_dim == 0 {
            return Err(invalid(format!("autoencoder dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Parameter handles of the network; valid for any precision copy of the
/// store that keeps parameter order.
#[derive(Debug, Clone)]
pub struct AeLayers {
    pub encoder: BiLstm,
    pub to_latent: Dense,
    pub from_latent: Dense,
    pub decoder: BiLstm,
    pub head: Dense,
}

impl AeLayers {
    fn build<F: Real, R: Rng + ?Sized>(store: &mut ParamStore<F>, cfg: &AeConfig, rng: &mut R) -> Result<Self> {
        let h = cfg.hidden;
        Ok(Self {
            encoder: BiLstm::new(store, "enc", cfg.feature_width(), h, cfg.layers, rng)?,
            to_latent: Dense::new(store, "enc.latent", 2 * h, cfg.latent_dim, rng)?,
            from_latent: Dense::new(store, "dec.latent", cfg.latent_dim, 2 * h, rng)?,
            decoder: BiLstm::new(store, "dec", 2 * h, h, cfg.layers, rng)?,
            head: Dense::new(store, "dec.head", 2 * h, cfg.feature_width(), rng)?,
        })
    }

    fn bind<F: Real>(store: &ParamStore<F>, cfg: &AeConfig) -> Result<Self> {
        let layers = Self {
            encoder: BiLstm::bind(store, "enc", cfg.layers)?,
            to_latent: Dense::bind(store, "enc.latent")?,
            from_latent: Dense::bind(store, "dec.latent")?,
            decoder: BiLstm::bind(store, "dec", cfg.layers)?,
            head: Dense::bind(store, "dec.head")?,
        };
        let h = cfg.hidden;
        let fits = layers.encoder.hidden() == h
            && layers.encoder.layers[0].0.in_dim == cfg.feature_width()
            && layers.to_latent.out_dim == cfg.latent_dim
            && layers.from_latent.in_dim == cfg.latent_dim
            && layers.decoder.hidden() == h
            && layers.head.out_dim == cfg.feature_width();
        if !fits {
            return Err(ModelError::Architecture(format!("stored tensors do not match {cfg:?}")));
        }
        Ok(layers)
    }

    /// `x` is a time-major `(T * B) x 3D` node; returns the `B x latent` node.
    pub fn encode_graph<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
        steps: usize,
        batch: usize,
    ) -> Result<NodeId> {
        let out = self.encoder.forward(g, store, x, steps, batch)?;
        let pooled = g.concat_cols(&[out.final_forward, out.final_backward])?;
        Ok(self.to_latent.forward(g, store, pooled)?)
    }

    /// `z` is `B x latent`; returns the time-major `(T * B) x 3D` features
    /// with softplus applied to the amplitude block.
    pub fn decode_graph<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        z: NodeId,
        steps: usize,
        batch: usize,
        taps: usize,
    ) -> Result<NodeId> {
        let u = self.from_latent.forward(g, store, z)?;
        let repeated = g.concat_rows(&vec![u; steps])?;
        let seq = self.decoder.forward(g, store, repeated, steps, batch)?;
        let y = self.head.forward(g, store, seq.sequence)?;
        let amp = g.slice_cols(y, 0, taps)?;
        let amp = g.softplus(amp);
        let trig = g.slice_cols(y, taps, 2 * taps)?;
        Ok(g.concat_cols(&[amp, trig])?)
    }
}

/// Fixed per-feature affine map `(x - shift) * scale` applied to the encoder
/// input. Zero taps featurise to a constant `cos = 1`, and hundreds of such
/// columns act as one huge bias on the first layer; without centring, Adam
/// drives the encoder into saturation and every latent collapses to the same
/// point. The map can be folded into the first layer, so it changes the
/// conditioning of training, not what the network can represent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    /// Column mean and `1 / max(std, INPUT_SCALE_FLOOR)` over every row of `items`.
    pub fn fit(items: &[FeatureSeq]) -> Result<Self> {
        let Some(first) = items.first() else { return Err(invalid("cannot fit input scaling on an empty set")) };
        let w = first.width();
        let mut sum = vec![0.0; w];
        let mut sq = vec![0.0; w];
        let mut n = 0.0;
        for h in items {
            if h.width() != w {
                return Err(invalid("items differ in feature width"));
            }
            for r in 0..h.rows() {
                for (j, &v) in h.row(r).iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
                n += 1.0;
            }
        }
        let shift: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&shift)
            .map(|(q, m)| 1.0 / (q / n - m * m).max(0.0).sqrt().max(INPUT_SCALE_FLOOR))
            .collect();
        Ok(Self { shift, scale })
    }

    fn check(&self, width: usize) -> Result<()> {
        if self.shift.len() != width || self.scale.len() != width {
            return Err(ModelError::Architecture(format!("input scaling has width {}, model {width}", self.shift.len())));
        }
        if self.shift.iter().chain(&self.scale).any(|v| !v.is_finite()) {
            return Err(invalid("input scaling contains non-finite values"));
        }
        Ok(())
    }
}

/// Stacks feature sequences time-major: row `t * B + b` is step `t` of item `b`.
pub fn time_major<F: Real>(items: &[&FeatureSeq]) -> Vec<F> {
    let Some(first) = items.first() else { return Vec::new() };
    let (steps, width) = (first.rows(), first.width());
    let mut out = Vec::with_capacity(steps * items.len() * width);
    for t in 0..steps {
        for it in items {
            out.extend(it.row(t).iter().map(|&v| F::of(v)));
        }
    }
    out
}

/// Time-major encoder input with the optional standardisation applied.
pub fn encoder_input<F: Real>(items: &[&FeatureSeq], scaling: Option<&InputScaling>) -> Vec<F> {
    let Some(s) = scaling else { return time_major(items) };
    let Some(first) = items.first() else { return Vec::new() };
    let (steps, width) = (first.rows(), first.width());
    let mut out = Vec::with_capacity(steps * items.len() * width);
    for t in 0..steps {
        for it in items {
            out.extend(it.row(t).iter().enumerate().map(|(j, &v)| F::of((v - s.shift[j]) * s.scale[j])));
        }
    }
    out
}

fn from_time_major<F: Real>(data: &[F], steps: usize, batch: usize, taps: usize) -> Result<Vec<FeatureSeq>> {
    let w = 3 * taps;
    (0..batch)
        .map(|b| {
            let mut v = Vec::with_capacity(steps * w);
            for t in 0..steps {
                let off = (t * batch + b) * w;
                v.extend(data[off..off + w].iter().map(|x| x.f64()));
            }
            Ok(FeatureSeq::from_flat(v, steps, taps)?)
        })
        .collect()
}

/// Builds the batch loss graph (batch mean of per-sample loss sums) and
/// returns `(loss, reconstruction)` nodes.
pub fn loss_graph<F: Real>(
    layers: &AeLayers,
    cfg: &AeConfig,
    scaling: Option<&InputScaling>,
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    items: &[&FeatureSeq],
    eta: f64,
) -> Result<(NodeId, NodeId)> {
    let b = items.len();
    let data = time_major::<F>(items);
    let x = g.input(cfg.snapshots * b, cfg.feature_width(), encoder_input(items, scaling))?;
    let z = layers.encode_graph(g, store, x, cfg.snapshots, b)?;
    let y = layers.decode_graph(g, store, z, cfg.snapshots, b, cfg.taps)?;
    let obj = AeObjective { target: data, taps: cfg.taps, eta: F::of(eta), scale: F::of(1.0 / b as f64) };
    let l = g.loss(y, &obj)?;
    Ok((l, y))
}

/// The trained network plus its configuration.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    cfg: AeConfig,
    layers: AeLayers,
    store: ParamStore<f32>,
    scaling: Option<InputScaling>,
}

impl Autoencoder {
    /// Freshly initialised weights drawn from stream `(seed, 0)`.
    pub fn new(cfg: AeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, 0);
        let mut store = ParamStore::new();
        let layers = AeLayers::build(&mut store, &cfg, &mut rng)?;
        Ok(Self { cfg, layers, store, scaling: None })
    }

    pub fn config(&self) -> &AeConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &AeLayers {
        &self.layers
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    /// `None` until fitted; the encoder then sees raw features.
    pub fn input_scaling(&self) -> Option<&InputScaling> {
        self.scaling.as_ref()
    }

    pub fn set_input_scaling(&mut self, scaling: Option<InputScaling>) -> Result<()> {
        if let Some(s) = &scaling {
            s.check(self.cfg.feature_width())?;
        }
        self.scaling = scaling;
        Ok(())
    }

    pub fn check_input(&self, h: &FeatureSeq) -> Result<()> {
        if h.rows() != self.cfg.snapshots || h.taps() != self.cfg.taps {
            return Err(invalid(format!(
                "feature sequence is {}x{} taps, model expects {}x{}",
                h.rows(),
                h.taps(),
                self.cfg.snapshots,
                self.cfg.taps
            )));
        }
        Ok(())
    }

    pub fn encode(&self, h: &FeatureSeq) -> Result<Vec<f64>> {
        Ok(self.encode_batch(std::slice::from_ref(h))?.remove(0))
    }

    pub fn encode_batch(&self, items: &[FeatureSeq]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(INFERENCE_BATCH) {
            let refs: Vec<&FeatureSeq> = chunk.iter().collect();
            for h in &refs {
                self.check_input(h)?;
            }
            let mut g = Graph::new();
            let data = encoder_input(&refs, self.scaling.as_ref());
            let x = g.input(self.cfg.snapshots * refs.len(), self.cfg.feature_width(), data)?;
            let z = self.layers.encode_graph(&mut g, &self.store, x, self.cfg.snapshots, refs.len())?;
            let zv = g.value(z);
            for b in 0..refs.len() {
                out.push(zv.row_slice(b).iter().map(|&v| v as f64).collect());
            }
        }
        Ok(out)
    }

    pub fn decode(&self, z: &[f64]) -> Result<FeatureSeq> {
        Ok(self.decode_batch(&[z.to_vec()])?.remove(0))
    }

    pub fn decode_batch(&self, latents: &[Vec<f64>]) -> Result<Vec<FeatureSeq>> {
        let mut out = Vec::with_capacity(latents.len());
        for chunk in latents.chunks(INFERENCE_BATCH) {
            let mut data = Vec::with_capacity(chunk.len() * self.cfg.latent_dim);
            for z in chunk {
                if z.len() != self.cfg.latent_dim {
                    return Err(invalid(format!("latent has {} values, expected {}", z.len(), self.cfg.latent_dim)));
                }
                data.extend(z.iter().map(|&v| v as f32));
            }
            let mut g = Graph::new();
            let zi = g.input(chunk.len(), self.cfg.latent_dim, data)?;
            let y = self.layers.decode_graph(&mut g, &self.store, zi, self.cfg.snapshots, chunk.len(), self.cfg.taps)?;
            out.extend(from_time_major(g.value(y).data(), self.cfg.snapshots, chunk.len(), self.cfg.taps)?);
        }
        Ok(out)
    }

    /// `decode(encode(h))` for each item.
    pub fn reconstruct_batch(&self, items: &[FeatureSeq]) -> Result<Vec<FeatureSeq>> {
        let z = self.encode_batch(items)?;
        self.decode_batch(&z)
    }

    /// Finite-difference check of the full loss gradient on a 64-bit copy of
    /// the weights.
    pub fn gradient_check<R: Rng + ?Sized>(
        &self,
        items: &[FeatureSeq],
        eta: f64,
        eps: f64,
        per_param: Option<usize>,
        rng: &mut R,
    ) -> Result<GradCheckReport> {
        let mut store: ParamStore<f64> = self.store.cast();
        let refs: Vec<&FeatureSeq> = items.iter().collect();
        let (layers, cfg, scaling) = (&self.layers, &self.cfg, self.scaling.as_ref());
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            loss_graph(layers, cfg, scaling, g, s, &refs, eta)
                .map(|(l, _)| l)
                .map_err(|e| match e {
                    ModelError::Nn(n) => n,
                    other => uasim_nn::NnError::InvalidArgument(other.to_string()),
                })
        };
        Ok(gradient_check(&mut store, build, eps, per_param, rng)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.cfg;
        let hyper = json!({
            "kind": CHECKPOINT_KIND,
            "snapshots": c.snapshots,
            "taps": c.taps,
            "hidden": c.hidden,
            "layers": c.layers,
            "latent_dim": c.latent_dim,
            "input_scaling": self.scaling,
        });
        Checkpoint::new(hyper, self.store.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind() != Some(CHECKPOINT_KIND) {
            return Err(ModelError::Architecture(format!("checkpoint kind {:?} is not {CHECKPOINT_KIND}", ck.kind())));
        }
        let get = |k: &str| -> Result<usize> {
            ck.hyperparams
                .get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| ModelError::Architecture(format!("checkpoint lacks {k}")))
        };
        let cfg = AeConfig {
            snapshots: get("snapshots")?,
            taps: get("taps")?,
            hidden: get("hidden")?,
            layers: get("layers")?,
            latent_dim: get("latent_dim")?,
        };
        cfg.validate()?;
        let layers = AeLayers::bind(&ck.params, &cfg)?;
        let scaling: Option<InputScaling> = match ck.hyperparams.get("input_scaling") {
            None => None,
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| ModelError::Architecture(format!("bad input scaling in checkpoint: {e}")))?,
        };
        let mut m = Self { cfg, layers, store: ck.params.clone(), scaling: None };
        m.set_input_scaling(scaling)?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
