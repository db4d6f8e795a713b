//! Noise-regression training: conditional prediction pre-training on fixed
//! pairs, and generative fine-tuning on pairs redrawn every epoch.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use uasim_core::rng::stream_rng;
use uasim_nn::{minibatches, Adam, Graph, ParamStore, PlateauAction, TrainSchedule};

use super::denoiser::{denoiser_input, DiffusionModel, LatentWhitening};
use super::process::{forward_sample, standard_normal};
use crate::error::{invalid, ModelError, Result};

/// Stream of the fixed validation draws (steps and noise).
const VALIDATION_STREAM: u64 = u64::MAX;
/// Stream of the fixed monitoring pairing in generative fine-tuning.
const MONITOR_STREAM: u64 = u64::MAX - 1;

/// Raw (unwhitened) latents: `cond` conditions the generation of `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPair {
    pub cond: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffTrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub reduction_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for DiffTrainConfig {
    fn default() -> Self {
        Self { max_epochs: 100, batch_size: 64, learning_rate: 1e-3, patience: 5, reduction_factor: 10.0, min_lr: 1e-6, seed: 0 }
    }
}

impl DiffTrainConfig {
    /// `pretrain` (1e-3, 5), `nof1` and `keppel` (5e-3, 50).
    pub fn preset(name: &str) -> Result<Self> {
        let (lr, patience) = match name {
            "pretrain" => (1e-3, 5),
            "nof1" | "keppel" => (5e-3, 50),
            other => return Err(invalid(format!("unknown diffusion preset {other}"))),
        };
        Ok(Self { learning_rate: lr, patience, ..Self::default() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffEpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub const DIFF_LOG_HEADER: &str = "epoch,lr,train_loss,val_loss";

impl DiffEpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.lr, self.train_loss, self.val_loss)
    }
}

/// Losses are per-sample squared noise errors `|eps_hat - eps|^2`, averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTrainReport {
    pub history: Vec<DiffEpochLog>,
    /// Validation loss of the starting weights.
    pub initial_val: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// One noised training example in whitened space.
struct Example {
    z_t: Vec<f64>,
    cond: Vec<f64>,
    step: usize,
    eps: Vec<f64>,
}

fn draw_example<R: Rng + ?Sized>(model: &DiffusionModel, pair: &ConditionPair, rng: &mut R) -> Result<Example> {
    let sched = model.schedule();
    let step = rng.random_range(1..=sched.steps());
    let eps = standard_normal(rng, model.config().latent_dim);
    let z_t = forward_sample(&model.whiten(&pair.target), step, &eps, sched)?;
    Ok(Example { z_t, cond: model.whiten(&pair.cond), step, eps })
}

fn batch_loss(model: &DiffusionModel, ex: &[&Example]) -> Result<(Graph<f32>, uasim_nn::NodeId)> {
    let cfg = model.config();
    let z_t: Vec<Vec<f64>> = ex.iter().map(|e| e.z_t.clone()).collect();
    let cond: Vec<Vec<f64>> = ex.iter().map(|e| e.cond.clone()).collect();
    let steps: Vec<usize> = ex.iter().map(|e| e.step).collect();
    let target: Vec<f32> = ex.iter().flat_map(|e| e.eps.iter().map(|&v| v as f32)).collect();
    let mut g = Graph::new();
    let x = g.input(ex.len(), cfg.input_width(), denoiser_input(&z_t, &cond, &steps, cfg.latent_dim)?)?;
    let y = model.layers().forward(&mut g, model.store(), x)?;
    let l = g.squared_error(y, target, 1.0 / ex.len() as f32)?;
    Ok((g, l))
}

/// Mean per-sample squared noise error over fixed examples.
fn evaluate(model: &DiffusionModel, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in examples.chunks(256) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let (g, l) = batch_loss(model, &refs)?;
        total += g.scalar(l) as f64 * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

fn check_pairs(model: &DiffusionModel, pairs: &[ConditionPair]) -> Result<()> {
    let d = model.config().latent_dim;
    if pairs.iter().any(|p| p.cond.len() != d || p.target.len() != d) {
        return Err(invalid(format!("all latents must have {d} values")));
    }
    Ok(())
}

fn fit_whitening_if_needed(model: &mut DiffusionModel, pairs: &[ConditionPair]) -> Result<()> {
    if model.whitening().is_none() {
        let all: Vec<&[f64]> = pairs.iter().flat_map(|p| [p.cond.as_slice(), p.target.as_slice()]).collect();
        model.set_whitening(Some(LatentWhitening::fit(&all)?))?;
    }
    Ok(())
}

/// Shared epoch loop. `pairs_for_epoch(e)` supplies the training pairs of
/// epoch `e`; `val` are fixed, pre-noised examples.
fn run<P>(
    model: &mut DiffusionModel,
    mut pairs_for_epoch: P,
    val: &[Example],
    cfg: &DiffTrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<DiffTrainReport>
where
    P: FnMut(usize) -> Vec<ConditionPair>,
{
    let mut schedule = TrainSchedule::with_limits(cfg.learning_rate, cfg.patience, cfg.reduction_factor, cfg.min_lr)?;
    let initial_val = evaluate(model, val)?;
    schedule.plateau_step(initial_val);
    let mut report =
        DiffTrainReport { history: Vec::new(), initial_val, best_val: initial_val, best_epoch: 0, stopped_early: false };
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{DIFF_LOG_HEADER}")?;
    }
    let mut best: ParamStore<f32> = model.store().clone();
    let mut adam = Adam::new(model.store());
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.learning_rate;
        let pairs = pairs_for_epoch(epoch);
        let mut rng = stream_rng(cfg.seed, epoch as u64);
        let order = minibatches(pairs.len(), cfg.batch_size, Some(&mut rng));
        let mut total = 0.0;
        for batch in order {
            let ex = batch.iter().map(|&i| draw_example(model, &pairs[i], &mut rng)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Example> = ex.iter().collect();
            let (g, l) = batch_loss(model, &refs)?;
            let loss = g.scalar(l) as f64;
            if !loss.is_finite() {
                return Err(ModelError::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            total += loss * ex.len() as f64;
            let store = model.store_mut();
            store.zero_grad();
            g.backward(l, store)?;
            adam.step(store, lr)?;
        }
        let train_loss = total / pairs.len() as f64;
        let val_loss = evaluate(model, val)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged(format!("non-finite validation loss at epoch {epoch}")));
        }
        let row = DiffEpochLog { epoch, lr, train_loss, val_loss };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", row.csv_row())?;
        }
        log::info!("diffusion epoch {epoch}: lr {lr:e} train {train_loss:.5} val {val_loss:.5}");
        report.history.push(row);
        let action = schedule.plateau_step(val_loss);
        if matches!(action, PlateauAction::Continue { improved: true }) {
            best = model.store().clone();
            report.best_val = val_loss;
            report.best_epoch = epoch;
        }
        if action == PlateauAction::Stop {
            report.stopped_early = true;
            break;
        }
    }
    model.store_mut().copy_values_from(&best)?;
    Ok(report)
}

fn fixed_examples(model: &DiffusionModel, pairs: &[ConditionPair], seed: u64) -> Result<Vec<Example>> {
    let mut rng = stream_rng(seed, VALIDATION_STREAM);
    pairs.iter().map(|p| draw_example(model, p, &mut rng)).collect()
}

/// Conditional pre-training on fixed `(condition, target)` pairs. Whitening
/// is fitted on the training pairs unless the model already has one.
/// Validation uses one fixed draw of step and noise per pair.
pub fn train_diffusion(
    model: &mut DiffusionModel,
    train: &[ConditionPair],
    val: &[ConditionPair],
    cfg: &DiffTrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<DiffTrainReport> {
    if train.is_empty() || val.is_empty() {
        return Err(invalid("training and validation pairs must be non-empty"));
    }
    check_pairs(model, train)?;
    check_pairs(model, val)?;
    fit_whitening_if_needed(model, train)?;
    let val_ex = fixed_examples(model, val, cfg.seed)?;
    run(model, |_| train.to_vec(), &val_ex, cfg, log)
}

/// For each target `i`, a condition index drawn uniformly from the other
/// `n - 1` items. Returns `(condition, target)` index pairs.
pub fn epoch_pairing<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(invalid("pairing needs at least two latents"));
    }
    Ok((0..n)
        .map(|i| {
            let j = rng.random_range(0..n - 1);
            (if j >= i { j + 1 } else { j }, i)
        })
        .collect())
}

fn pairs_from(latents: &[Vec<f64>], idx: &[(usize, usize)]) -> Vec<ConditionPair> {
    idx.iter().map(|&(c, t)| ConditionPair { cond: latents[c].clone(), target: latents[t].clone() }).collect()
}

/// Pairing used in epoch `epoch` of [`fine_tune_generative`] with this seed.
pub fn fine_tune_pairing(n: usize, seed: u64, epoch: usize) -> Result<Vec<(usize, usize)>> {
    // a stream distinct from the epoch's shuffle/noise stream
    epoch_pairing(n, &mut stream_rng(seed ^ 0x5041_4952, epoch as u64))
}

/// Fixed pairing that drives plateau detection in [`fine_tune_generative`].
pub fn monitor_pairing(n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    epoch_pairing(n, &mut stream_rng(seed, MONITOR_STREAM))
}

/// Full generative fine-tuning: every epoch pairs each latent with a random
/// other one as its condition; a fixed pairing, noised once, is monitored.
pub fn fine_tune_generative(
    model: &mut DiffusionModel,
    latents: &[Vec<f64>],
    cfg: &DiffTrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<DiffTrainReport> {
    let n = latents.len();
    let monitor = pairs_from(latents, &monitor_pairing(n, cfg.seed)?);
    check_pairs(model, &monitor)?;
    fit_whitening_if_needed(model, &monitor)?;
    let val_ex = fixed_examples(model, &monitor, cfg.seed)?;
    let seed = cfg.seed;
    let epoch_pairs = |e: usize| pairs_from(latents, &fine_tune_pairing(n, seed, e).expect("n >= 2 checked above"));
    run(model, epoch_pairs, &val_ex, cfg, log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(DiffTrainConfig::preset("pretrain").unwrap().patience, 5);
        let k = DiffTrainConfig::preset("keppel").unwrap();
        assert_eq!((k.learning_rate, k.patience), (5e-3, 50));
        assert!(DiffTrainConfig::preset("x").is_err());
    }

    #[test]
    fn two_item_pairing() {
        let mut rng = stream_rng(0, 0);
        for _ in 0..5 {
            assert_eq!(epoch_pairing(2, &mut rng).unwrap(), vec![(1, 0), (0, 1)]);
        }
        assert!(epoch_pairing(1, &mut rng).is_err());
    }

    #[test]
    fn pairing_never_self_and_varies() {
        let first = fine_tune_pairing(20, 3, 1).unwrap();
        let mut differs = false;
        for e in 1..=10 {
            let p = fine_tune_pairing(20, 3, e).unwrap();
            assert!(p.iter().all(|(c, t)| c != t));
            assert_eq!(p.iter().map(|x| x.1).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());
            differs |= p != first;
        }
        assert!(differs);
        assert_eq!(monitor_pairing(20, 3).unwrap(), monitor_pairing(20, 3).unwrap());
    }
}
