//! Mini-batch Adam training with reduce-on-plateau and best-validation
//! weight selection.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use uasim_core::rng::stream_rng;
use uasim_core::FeatureSeq;
use uasim_nn::{minibatches, Adam, Graph, ParamStore, PlateauAction, TrainSchedule};

use super::loss::ae_loss;
use super::model::{loss_graph, Autoencoder, InputScaling};
use crate::error::{invalid, ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeTrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub reduction_factor: f64,
    pub min_lr: f64,
    /// Weight of the phase term.
    pub eta: f64,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
    /// Wall-clock budget in seconds, checked after each epoch.
    pub time_limit_secs: Option<f64>,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 3,
            reduction_factor: 10.0,
            min_lr: 1e-6,
            eta: 1.0,
            seed: 0,
            time_limit_secs: None,
        }
    }
}

impl AeTrainConfig {
    /// Named learning-rate/patience presets:
    /// `pretrain` (1e-3, 3), `sim-noise` (1e-4, 5), `nov2024` (1e-2, 10),
    /// `nof1` (5e-3, 15), `keppel` (1e-3, 10).
    pub fn preset(name: &str) -> Result<Self> {
        let (lr, patience) = match name {
            "pretrain" => (1e-3, 3),
            "sim-noise" => (1e-4, 5),
            "nov2024" => (1e-2, 10),
            "nof1" => (5e-3, 15),
            "keppel" => (1e-3, 10),
            other => return Err(invalid(format!("unknown training preset {other}"))),
        };
        Ok(Self { learning_rate: lr, patience, ..Self::default() })
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation amplitude term, mean per sample.
    pub amp_term: f64,
    /// Validation phase term, mean per sample.
    pub phase_term: f64,
}

pub const LOG_HEADER: &str = "epoch,lr,train_loss,val_loss,amp_term,phase_term";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.amp_term, self.phase_term
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainReport {
    pub history: Vec<EpochLog>,
    pub best_val: f64,
    /// Epoch whose weights were kept (0 = the starting weights).
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Training ended because `time_limit_secs` ran out.
    pub timed_out: bool,
}

/// Mean per-sample loss and its terms over `items`.
pub fn evaluate(model: &Autoencoder, items: &[FeatureSeq], eta: f64) -> Result<(f64, f64, f64)> {
    if items.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let recon = model.reconstruct_batch(items)?;
    let (mut amp, mut phase) = (0.0, 0.0);
    for (h, hh) in items.iter().zip(&recon) {
        let l = ae_loss(h.as_slice(), hh.as_slice(), h.taps(), eta)?;
        amp += l.amp_term;
        phase += l.phase_term;
    }
    let n = items.len() as f64;
    Ok(((amp + eta * phase) / n, amp / n, phase / n))
}

/// Amplitude reconstruction error over `items`:
/// `10 log10(sum |A - A_hat|^2 / sum A^2)`.
pub fn amplitude_nmse_db(items: &[FeatureSeq], recon: &[FeatureSeq]) -> Result<f64> {
    if items.is_empty() || items.len() != recon.len() {
        return Err(invalid("need equally many non-empty originals and reconstructions"));
    }
    let (mut err, mut power) = (0.0, 0.0);
    for (h, r) in items.iter().zip(recon) {
        if h.rows() != r.rows() || h.taps() != r.taps() {
            return Err(invalid("reconstruction shape differs from the original"));
        }
        for row in 0..h.rows() {
            let (a, b) = (&h.row(row)[..h.taps()], &r.row(row)[..r.taps()]);
            err += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            power += a.iter().map(|x| x * x).sum::<f64>();
        }
    }
    if power <= 0.0 {
        return Err(invalid("originals have zero amplitude"));
    }
    Ok(10.0 * (err / power).log10())
}

fn train_epoch(
    model: &mut Autoencoder,
    adam: &mut Adam<f32>,
    items: &[FeatureSeq],
    cfg: &AeTrainConfig,
    lr: f64,
    epoch: usize,
) -> Result<f64> {
    let mut rng = stream_rng(cfg.seed, epoch as u64);
    let mut total = 0.0;
    for batch in minibatches(items.len(), cfg.batch_size, Some(&mut rng)) {
        let refs: Vec<&FeatureSeq> = batch.iter().map(|&i| &items[i]).collect();
        let layers = model.layers().clone();
        let mcfg = *model.config();
        let mut g = Graph::new();
        let scaling = model.input_scaling().cloned();
        let (l, _) = loss_graph(&layers, &mcfg, scaling.as_ref(), &mut g, model.store(), &refs, cfg.eta)?;
        let loss = g.scalar(l) as f64;
        if !loss.is_finite() {
            return Err(ModelError::Diverged(format!("non-finite loss at epoch {epoch}")));
        }
        total += loss * refs.len() as f64;
        let store = model.store_mut();
        store.zero_grad();
        g.backward(l, store)?;
        adam.step(store, lr)?;
    }
    Ok(total / items.len() as f64)
}

/// Trains `model` in place and leaves it holding the best-validation weights.
/// An unfitted input scaling is first fitted on `train`; a fitted one (for
/// instance from a pre-trained checkpoint) is kept. With `max_epochs == 0`
/// the model is returned untouched.
pub fn train_autoencoder(
    model: &mut Autoencoder,
    train: &[FeatureSeq],
    val: &[FeatureSeq],
    cfg: &AeTrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<AeTrainReport> {
    if train.is_empty() || val.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    for h in train.iter().chain(val) {
        model.check_input(h)?;
    }
    if cfg.max_epochs == 0 {
        let (v, _, _) = evaluate(model, val, cfg.eta)?;
        return Ok(AeTrainReport { history: Vec::new(), best_val: v, best_epoch: 0, stopped_early: false, timed_out: false });
    }
    if model.input_scaling().is_none() {
        model.set_input_scaling(Some(InputScaling::fit(train)?))?;
    }
    let mut schedule = TrainSchedule::with_limits(cfg.learning_rate, cfg.patience, cfg.reduction_factor, cfg.min_lr)?;
    let (start_val, _, _) = evaluate(model, val, cfg.eta)?;
    schedule.plateau_step(start_val);
    let mut best: ParamStore<f32> = model.store().clone();
    let mut report = AeTrainReport { history: Vec::new(), best_val: start_val, best_epoch: 0, stopped_early: false, timed_out: false };
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{LOG_HEADER}")?;
    }
    let mut adam = Adam::new(model.store());
    let start = Instant::now();
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.learning_rate;
        let train_loss = train_epoch(model, &mut adam, train, cfg, lr, epoch)?;
        let (val_loss, amp, phase) = evaluate(model, val, cfg.eta)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged(format!("non-finite validation loss at epoch {epoch}")));
        }
        let row = EpochLog { epoch, lr, train_loss, val_loss, amp_term: amp, phase_term: phase };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", row.csv_row())?;
        }
        log::info!("epoch {epoch}: lr {lr:e} train {train_loss:.5} val {val_loss:.5}");
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
        if cfg.time_limit_secs.is_some_and(|t| start.elapsed().as_secs_f64() > t) {
            report.timed_out = true;
            break;
        }
    }
    model.store_mut().copy_values_from(&best)?;
    Ok(report)
}

/// Continues training from the model's current weights with a preset-style
/// configuration. Identical loop to [`train_autoencoder`].
pub fn fine_tune_autoencoder(
    model: &mut Autoencoder,
    train: &[FeatureSeq],
    val: &[FeatureSeq],
    cfg: &AeTrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<AeTrainReport> {
    train_autoencoder(model, train, val, cfg, log)
}
