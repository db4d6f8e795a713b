//! Residual MLP noise predictor and the conditional sampler built on it.
//!
//! Input row: `[z_t | z_c | time_embedding(t)]`. Layout:
//! `in: Dense(2L + 32 -> W)`, three blocks `Dense(W -> W) -> LayerNorm ->
//! LeakyReLU`, plus a bridge `Dense(2L + 32 -> W)` of the raw input added to
//! the last block's output, then `head: Dense(W -> L)`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uasim_core::rng::stream_rng;
use uasim_nn::{gradient_check, Checkpoint, Dense, GradCheckReport, Graph, LayerNorm, NodeId, ParamStore, Real};

use super::process::{reverse_step, standard_normal, time_embedding, TIME_EMBEDDING_DIM};
use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::error::{invalid, ModelError, Result};

pub const CHECKPOINT_KIND: &str = "diffusion";
pub const HIDDEN_BLOCKS: usize = 3;

/// Inference batch size; only affects memory.
const INFERENCE_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub latent_dim: usize,
    pub width: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self { latent_dim: 128, width: 2048 }
    }
}

impl DenoiserConfig {
    pub fn input_width(&self) -> usize {
        2 * self.latent_dim + TIME_EMBEDDING_DIM
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.width == 0 {
            return Err(invalid(format!("denoiser dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DenoiserLayers {
    pub input: Dense,
    pub blocks: Vec<(Dense, LayerNorm)>,
    pub bridge: Dense,
    pub head: Dense,
}

impl DenoiserLayers {
    fn build<F: Real, R: Rng + ?Sized>(store: &mut ParamStore<F>, cfg: &DenoiserConfig, rng: &mut R) -> Result<Self> {
        let (i, w) = (cfg.input_width(), cfg.width);
        let input = Dense::new(store, "in", i, w, rng)?;
        let mut blocks = Vec::with_capacity(HIDDEN_BLOCKS);
        for k in 0..HIDDEN_BLOCKS {
            blocks.push((Dense::new(store, &format!("block{k}.dense"), w, w, rng)?, LayerNorm::new(store, &format!("block{k}.ln"), w)?));
        }
        let bridge = Dense::new(store, "bridge", i, w, rng)?;
        let head = Dense::new(store, "head", w, cfg.latent_dim, rng)?;
        // a zero head starts the predictor at eps_hat = 0
        store.value_mut(head.w).fill(F::zero());
        Ok(Self { input, blocks, bridge, head })
    }

    fn bind<F: Real>(store: &ParamStore<F>, cfg: &DenoiserConfig) -> Result<Self> {
        let input = Dense::bind(store, "in")?;
        let blocks = (0..HIDDEN_BLOCKS)
            .map(|k| Ok((Dense::bind(store, &format!("block{k}.dense"))?, LayerNorm::bind(store, &format!("block{k}.ln"))?)))
            .collect::<Result<Vec<_>>>()?;
        let bridge = Dense::bind(store, "bridge")?;
        let head = Dense::bind(store, "head")?;
        let fits = input.in_dim == cfg.input_width()
            && input.out_dim == cfg.width
            && blocks.iter().all(|(d, _)| d.in_dim == cfg.width && d.out_dim == cfg.width)
            && bridge.in_dim == cfg.input_width()
            && bridge.out_dim == cfg.width
            && head.in_dim == cfg.width
            && head.out_dim == cfg.latent_dim;
        if !fits {
            return Err(ModelError::Architecture(format!("stored tensors do not match {cfg:?}")));
        }
        Ok(Self { input, blocks, bridge, head })
    }

    /// `x` is `B x (2L + 32)`; returns the `B x L` noise prediction.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId> {
        let mut h = self.input.forward(g, store, x)?;
        for (dense, ln) in &self.blocks {
            let d = dense.forward(g, store, h)?;
            let n = ln.forward(g, store, d)?;
            h = g.leaky_relu(n);
        }
        let skip = self.bridge.forward(g, store, x)?;
        let h = g.add(h, skip)?;
        Ok(self.head.forward(g, store, h)?)
    }
}

/// Rows `[z_t | z_c | time_embedding(t)]` for a batch.
pub fn denoiser_input<F: Real>(z_t: &[Vec<f64>], z_c: &[Vec<f64>], steps: &[usize], latent_dim: usize) -> Result<Vec<F>> {
    if z_t.len() != z_c.len() || z_t.len() != steps.len() {
        return Err(invalid("batch parts differ in length"));
    }
    let mut out = Vec::with_capacity(z_t.len() * (2 * latent_dim + TIME_EMBEDDING_DIM));
    for ((a, c), &t) in z_t.iter().zip(z_c).zip(steps) {
        if a.len() != latent_dim || c.len() != latent_dim {
            return Err(invalid(format!("latents must have {latent_dim} values, got {} and {}", a.len(), c.len())));
        }
        out.extend(a.iter().chain(c).map(|&v| F::of(v)));
        out.extend(time_embedding(t, TIME_EMBEDDING_DIM).into_iter().map(F::of));
    }
    Ok(out)
}

/// Per-dimension standardisation of latents, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentWhitening {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LatentWhitening {
    /// Dimensions with zero spread get unit scale (they are only centred).
    pub fn fit(latents: &[&[f64]]) -> Result<Self> {
        let Some(first) = latents.first() else { return Err(invalid("cannot fit whitening on no latents")) };
        let d = first.len();
        let n = latents.len() as f64;
        let mut mean = vec![0.0; d];
        for z in latents {
            if z.len() != d {
                return Err(invalid("latents differ in length"));
            }
            for (m, v) in mean.iter_mut().zip(z.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for z in latents {
            for ((s, v), m) in var.iter_mut().zip(z.iter()).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn unwhiten(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleSpec {
    kind: ScheduleKind,
    steps: usize,
    beta_min: f64,
    beta_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    betas: Option<Vec<f64>>,
}

impl ScheduleSpec {
    fn of(s: &NoiseSchedule) -> Self {
        let betas = (s.kind == ScheduleKind::Custom).then(|| s.beta.clone());
        Self { kind: s.kind, steps: s.steps(), beta_min: s.beta_min, beta_max: s.beta_max, betas }
    }

    fn build(&self) -> Result<NoiseSchedule> {
        match (&self.kind, &self.betas) {
            (ScheduleKind::Custom, Some(b)) => NoiseSchedule::from_betas(b.clone()),
            (ScheduleKind::Custom, None) => Err(ModelError::Architecture("custom schedule without betas".into())),
            (k, _) => NoiseSchedule::new(*k, self.steps, self.beta_min, self.beta_max),
        }
    }
}

/// Denoiser weights, noise schedule and latent whitening. All network
/// inputs and outputs live in the whitened latent space; [`Self::generate`]
/// takes and returns raw latents.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    cfg: DenoiserConfig,
    layers: DenoiserLayers,
    store: ParamStore<f32>,
    schedule: NoiseSchedule,
    whitening: Option<LatentWhitening>,
}

impl DiffusionModel {
    /// Fresh weights from stream `(seed, 0)`.
    pub fn new(cfg: DenoiserConfig, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, 0);
        let mut store = ParamStore::new();
        let layers = DenoiserLayers::build(&mut store, &cfg, &mut rng)?;
        Ok(Self { cfg, layers, store, schedule, whitening: None })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &DenoiserLayers {
        &self.layers
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Replaces the schedule (it is a tunable hyperparameter for fine-tuning).
    pub fn set_schedule(&mut self, schedule: NoiseSchedule) {
        self.schedule = schedule;
    }

    pub fn whitening(&self) -> Option<&LatentWhitening> {
        self.whitening.as_ref()
    }

    pub fn set_whitening(&mut self, w: Option<LatentWhitening>) -> Result<()> {
        if let Some(w) = &w {
            if w.mean.len() != self.cfg.latent_dim || w.std.len() != self.cfg.latent_dim {
                return Err(ModelError::Architecture("whitening does not match latent dimension".into()));
            }
            if w.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || w.mean.iter().any(|m| !m.is_finite()) {
                return Err(invalid("whitening statistics must be finite with positive spread"));
            }
        }
        self.whitening = w;
        Ok(())
    }

    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        self.whitening.as_ref().map_or_else(|| z.to_vec(), |w| w.whiten(z))
    }

    pub fn unwhiten(&self, z: &[f64]) -> Vec<f64> {
        self.whitening.as_ref().map_or_else(|| z.to_vec(), |w| w.unwhiten(z))
    }

    /// Predicted noise for one whitened `(z_t, z_c, t)`.
    pub fn predict_noise(&self, z_t: &[f64], z_c: &[f64], t: usize) -> Result<Vec<f64>> {
        Ok(self.predict_noise_batch(&[z_t.to_vec()], &[z_c.to_vec()], &[t])?.remove(0))
    }

    pub fn predict_noise_batch(&self, z_t: &[Vec<f64>], z_c: &[Vec<f64>], steps: &[usize]) -> Result<Vec<Vec<f64>>> {
        if z_t.len() != z_c.len() || z_t.len() != steps.len() {
            return Err(invalid("batch parts differ in length"));
        }
        for &t in steps {
            self.schedule.check_step(t)?;
        }
        let l = self.cfg.latent_dim;
        let mut out = Vec::with_capacity(z_t.len());
        for start in (0..z_t.len()).step_by(INFERENCE_BATCH) {
            let end = (start + INFERENCE_BATCH).min(z_t.len());
            let data = denoiser_input::<f32>(&z_t[start..end], &z_c[start..end], &steps[start..end], l)?;
            let mut g = Graph::new();
            let x = g.input(end - start, self.cfg.input_width(), data)?;
            let y = self.layers.forward(&mut g, &self.store, x)?;
            let v = g.value(y);
            out.extend((0..end - start).map(|b| v.row_slice(b).iter().map(|&e| e as f64).collect::<Vec<_>>()));
        }
        Ok(out)
    }

    /// Reverse chain from `z_T ~ N(0, I)` for whitened conditions, one rng per sample.
    fn sample_whitened(&self, conds: &[Vec<f64>], rngs: &mut [&mut dyn RngCore]) -> Result<Vec<Vec<f64>>> {
        let l = self.cfg.latent_dim;
        let mut z: Vec<Vec<f64>> = rngs.iter_mut().map(|r| standard_normal(&mut **r, l)).collect();
        for t in (1..=self.schedule.steps()).rev() {
            let eps = self.predict_noise_batch(&z, conds, &vec![t; z.len()])?;
            for ((zi, e), r) in z.iter_mut().zip(&eps).zip(rngs.iter_mut()) {
                *zi = reverse_step(zi, e, t, &self.schedule, &mut **r)?;
            }
        }
        Ok(z)
    }

    /// One generated raw latent for the raw condition `z_c`.
    pub fn generate<R: RngCore>(&self, z_c: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_latent(z_c)?;
        let cond = vec![self.whiten(z_c)];
        let mut rngs: [&mut dyn RngCore; 1] = [rng];
        let z = self.sample_whitened(&cond, &mut rngs)?;
        Ok(self.unwhiten(&z[0]))
    }

    /// Sample `i` uses its own stream `(seed, i)`, so results do not depend
    /// on how the batch is split.
    pub fn generate_batch(&self, conds: &[Vec<f64>], seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(conds.len());
        for start in (0..conds.len()).step_by(INFERENCE_BATCH) {
            let end = (start + INFERENCE_BATCH).min(conds.len());
            let mut wc = Vec::with_capacity(end - start);
            for c in &conds[start..end] {
                self.check_latent(c)?;
                wc.push(self.whiten(c));
            }
            let mut owned: Vec<_> = (start..end).map(|i| stream_rng(seed, i as u64)).collect();
            let mut rngs: Vec<&mut dyn RngCore> = owned.iter_mut().map(|r| r as &mut dyn RngCore).collect();
            for z in self.sample_whitened(&wc, &mut rngs)? {
                out.push(self.unwhiten(&z));
            }
        }
        Ok(out)
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.cfg.latent_dim {
            return Err(invalid(format!("latent has {} values, expected {}", z.len(), self.cfg.latent_dim)));
        }
        Ok(())
    }

    /// Finite-difference check of the noise-regression loss on a 64-bit copy.
    pub fn gradient_check<R: Rng + ?Sized>(
        &self,
        z_t: &[Vec<f64>],
        z_c: &[Vec<f64>],
        steps: &[usize],
        eps: &[Vec<f64>],
        fd_step: f64,
        per_param: Option<usize>,
        rng: &mut R,
    ) -> Result<GradCheckReport> {
        let l = self.cfg.latent_dim;
        let data = denoiser_input::<f64>(z_t, z_c, steps, l)?;
        let target: Vec<f64> = eps.iter().flatten().copied().collect();
        if target.len() != z_t.len() * l {
            return Err(invalid("noise targets do not match the batch"));
        }
        let mut store: ParamStore<f64> = self.store.cast();
        let (layers, b, w) = (&self.layers, z_t.len(), self.cfg.input_width());
        let build = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let x = g.input(b, w, data.clone())?;
            let y = layers.forward(g, s, x).map_err(|e| match e {
                ModelError::Nn(n) => n,
                other => uasim_nn::NnError::InvalidArgument(other.to_string()),
            })?;
            g.squared_error(y, target.clone(), 1.0 / b as f64)
        };
        Ok(gradient_check(&mut store, build, fd_step, per_param, rng)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hyper = json!({
            "kind": CHECKPOINT_KIND,
            "latent_dim": self.cfg.latent_dim,
            "width": self.cfg.width,
            "schedule": ScheduleSpec::of(&self.schedule),
            "whitening": self.whitening,
        });
        Checkpoint::new(hyper, self.store.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind() != Some(CHECKPOINT_KIND) {
            return Err(ModelError::Architecture(format!("checkpoint kind {:?} is not {CHECKPOINT_KIND}", ck.kind())));
        }
        let field = |k: &str| {
            ck.hyperparams.get(k).cloned().ok_or_else(|| ModelError::Architecture(format!("checkpoint lacks {k}")))
        };
        let bad = |e: serde_json::Error| ModelError::Architecture(format!("bad checkpoint metadata: {e}"));
        let cfg = DenoiserConfig {
            latent_dim: serde_json::from_value(field("latent_dim")?).map_err(bad)?,
            width: serde_json::from_value(field("width")?).map_err(bad)?,
        };
        cfg.validate()?;
        let spec: ScheduleSpec = serde_json::from_value(field("schedule")?).map_err(bad)?;
        let whitening: Option<LatentWhitening> = match ck.hyperparams.get("whitening") {
            None => None,
            Some(v) => serde_json::from_value(v.clone()).map_err(bad)?,
        };
        let layers = DenoiserLayers::bind(&ck.params, &cfg)?;
        let mut m = Self { cfg, layers, store: ck.params.clone(), schedule: spec.build()?, whitening: None };
        m.set_whitening(whitening)?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
