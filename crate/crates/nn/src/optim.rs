//! Adam, reduce-on-plateau scheduling and mini-batching.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::real::Real;

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>) -> Self {
        Self::with_betas(store, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(store: &ParamStore<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let m: Vec<Vec<F>> = store.iter().map(|p| vec![F::zero(); p.value.len()]).collect();
        Self { beta1, beta2, eps, step: 0, v: m.clone(), m }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<F>, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(NnError::InvalidArgument(format!("learning rate must be positive, got {lr}")));
        }
        if store.len() != self.m.len() {
            return Err(NnError::Shape("optimizer state does not match parameter store".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (one, eps) = (F::one(), F::of(self.eps));
        let step_size = F::of(lr / bc1);
        let inv_bc2 = F::of(1.0 / bc2);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.value.len() {
                return Err(NnError::Shape(format!("optimizer state for {} has wrong size", p.name)));
            }
            let g = p.grad.data();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                w[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}

/// What the training loop should do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlateauAction {
    Continue { improved: bool },
    Reduced { lr: f64 },
    Stop,
}

/// Reduce-on-plateau learning-rate control with early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub patience: usize,
    pub reduction_factor: f64,
    pub min_lr: f64,
    pub best_val: f64,
    pub epochs_since_best: usize,
}

impl TrainSchedule {
    pub fn new(learning_rate: f64, patience: usize) -> Result<Self> {
        Self::with_limits(learning_rate, patience, 10.0, 1e-6)
    }

    pub fn with_limits(learning_rate: f64, patience: usize, reduction_factor: f64, min_lr: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || patience == 0 || !(reduction_factor > 1.0) || !(min_lr > 0.0) {
            return Err(NnError::InvalidArgument(format!(
                "bad schedule lr={learning_rate} patience={patience} factor={reduction_factor} min_lr={min_lr}"
            )));
        }
        Ok(Self {
            learning_rate,
            patience,
            reduction_factor,
            min_lr,
            best_val: f64::INFINITY,
            epochs_since_best: 0,
        })
    }

    /// Records one validation loss. A strict improvement resets the counter;
    /// `patience` epochs without one divide the rate by the reduction factor,
    /// and a rate below `min_lr` signals a stop.
    pub fn plateau_step(&mut self, val_loss: f64) -> PlateauAction {
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.epochs_since_best = 0;
            return PlateauAction::Continue { improved: true };
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best < self.patience {
            return PlateauAction::Continue { improved: false };
        }
        self.epochs_since_best = 0;
        self.learning_rate /= self.reduction_factor;
        // relative slack so that 1e-3 / 10 / 10 / 10 still counts as 1e-6
        if self.learning_rate < self.min_lr * (1.0 - 1e-9) {
            PlateauAction::Stop
        } else {
            PlateauAction::Reduced { lr: self.learning_rate }
        }
    }
}

/// Splits `0..n` into consecutive batches of `batch_size` (the last one may
/// be shorter), optionally shuffled first.
pub fn minibatches<R: Rng + ?Sized>(n: usize, batch_size: usize, shuffle: Option<&mut R>) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(rng) = shuffle {
        idx.shuffle(rng);
    }
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
