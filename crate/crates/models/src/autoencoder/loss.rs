//! Amplitude-phase reconstruction loss.
//!
//! Per feature row `[A, sin, cos]` and reconstruction `[a, s, c]`:
//!
//! ```text
//! amp   = sum_j (A_j - a_j)^2
//! phase = sum_j (A_j sin_j - a_j s_j)^2 + (A_j cos_j - a_j c_j)^2
//! total = amp + eta * phase
//! ```
//!
//! Both sides of the trigonometric terms are amplitude-weighted, so taps that
//! are (near) zero in both contribute almost nothing whatever their phase.

use uasim_nn::{NnError, Objective, Real};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeLossBreakdown {
    pub amp_term: f64,
    pub phase_term: f64,
    pub eta: f64,
}

impl AeLossBreakdown {
    pub fn total(&self) -> f64 {
        self.amp_term + self.eta * self.phase_term
    }
}

/// Loss terms summed over every row of `h`/`h_hat` (each of width `3 * taps`).
pub fn ae_loss(h: &[f64], h_hat: &[f64], taps: usize, eta: f64) -> Result<AeLossBreakdown> {
    if !(eta >= 0.0) {
        return Err(invalid(format!("eta must be non-negative, got {eta}")));
    }
    if h.len() != h_hat.len() || taps == 0 || h.len() % (3 * taps) != 0 {
        return Err(invalid(format!(
            "loss inputs of length {} and {} do not form rows of {} features",
            h.len(),
            h_hat.len(),
            3 * taps
        )));
    }
    let (mut amp, mut phase) = (0.0, 0.0);
    for (r, p) in h.chunks_exact(3 * taps).zip(h_hat.chunks_exact(3 * taps)) {
        for j in 0..taps {
            let (a, s, c) = (r[j], r[taps + j], r[2 * taps + j]);
            let (ah, sh, ch) = (p[j], p[taps + j], p[2 * taps + j]);
            amp += (a - ah).powi(2);
            phase += (a * s - ah * sh).powi(2) + (a * c - ah * ch).powi(2);
        }
    }
    Ok(AeLossBreakdown { amp_term: amp, phase_term: phase, eta })
}

/// The same loss as a differentiable objective, multiplied by `scale`
/// (`1 / batch` gives the batch mean of per-sample sums).
#[derive(Debug, Clone)]
pub struct AeObjective<F> {
    pub target: Vec<F>,
    pub taps: usize,
    pub eta: F,
    pub scale: F,
}

impl<F: Real> Objective<F> for AeObjective<F> {
    fn eval(&self, pred: &[F], cols: usize, grad: &mut [F]) -> std::result::Result<F, NnError> {
        let d = self.taps;
        if cols != 3 * d || pred.len() != self.target.len() {
            return Err(NnError::Shape(format!(
                "ae loss: prediction {} x {cols}, target length {}",
                pred.len() / cols.max(1),
                self.target.len()
            )));
        }
        let two = F::of(2.0);
        let (eta, k) = (self.eta, self.scale);
        let mut total = F::zero();
        for ((r, p), g) in self
            .target
            .chunks_exact(cols)
            .zip(pred.chunks_exact(cols))
            .zip(grad.chunks_exact_mut(cols))
        {
            for j in 0..d {
                let (a, s, c) = (r[j], r[d + j], r[2 * d + j]);
                let (ah, sh, ch) = (p[j], p[d + j], p[2 * d + j]);
                let ea = a - ah;
                let es = a * s - ah * sh;
                let ec = a * c - ah * ch;
                total += ea * ea + eta * (es * es + ec * ec);
                g[j] = -two * k * (ea + eta * (es * sh + ec * ch));
                g[d + j] = -two * k * eta * es * ah;
                g[2 * d + j] = -two * k * eta * ec * ah;
            }
        }
        Ok(total * k)
    }
}
