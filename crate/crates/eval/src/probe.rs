//! Channel probing: maximal-length sequences and NLMS tap tracking.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use uasim_core::Tvir;

use crate::error::{invalid, EvalError, Result};

/// Feedback taps (1-based register stages) of a primitive polynomial for
/// each supported order.
const FEEDBACK_TAPS: [(u32, &[u32]); 15] = [
    (2, &[2, 1]),
    (3, &[3, 2]),
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 6, 4, 1]),
    (13, &[13, 4, 3, 1]),
    (14, &[14, 5, 3, 1]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
];

pub fn supported_orders() -> impl Iterator<Item = u32> {
    FEEDBACK_TAPS.iter().map(|(o, _)| *o)
}

/// One period (`2^order - 1` chips) of a Fibonacci LFSR started from the
/// all-ones state, with bit 0 mapped to +1 and bit 1 to -1.
pub fn msequence(order: u32) -> Result<Vec<f64>> {
    let taps = FEEDBACK_TAPS
        .iter()
        .find(|(o, _)| *o == order)
        .map(|(_, t)| *t)
        .ok_or_else(|| EvalError::Config(format!("no primitive polynomial stored for order {order}")))?;
    let mask = (1u32 << order) - 1;
    let mut state = mask;
    let len = mask as usize;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let bit = (state >> (order - 1)) & 1;
        out.push(if bit == 0 { 1.0 } else { -1.0 });
        let fb = taps.iter().fold(0, |acc, &t| acc ^ ((state >> (t - 1)) & 1));
        state = ((state << 1) | fb) & mask;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlmsConfig {
    pub num_taps: usize,
    pub mu: f64,
    pub eps_reg: f64,
    /// Samples between stored snapshots of the tap vector.
    pub samples_per_snapshot: usize,
    /// Probe sample rate in Hz; also the tap rate of the estimate.
    pub sample_rate: f64,
}

impl Default for NlmsConfig {
    fn default() -> Self {
        Self { num_taps: 250, mu: 0.5, eps_reg: 1e-6, samples_per_snapshot: 600, sample_rate: 12_000.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlmsEstimate {
    /// Tap vector after the last sample of each snapshot period.
    pub tvir: Tvir,
    /// Snapshots during which the regressor had zero energy at least once.
    pub flagged: Vec<usize>,
}

/// Tracks `received[n] ~ sum_j h_j probe[n - j]` with
/// `h += mu e conj(u) / (|u|^2 + eps_reg)`, starting from zero taps.
pub fn nlms_estimate(probe: &[Complex64], received: &[Complex64], cfg: &NlmsConfig) -> Result<NlmsEstimate> {
    if !(cfg.mu >= 0.0 && cfg.mu <= 2.0) {
        return Err(invalid(format!("step size must lie in [0, 2], got {}", cfg.mu)));
    }
    if cfg.num_taps == 0 || cfg.samples_per_snapshot == 0 {
        return Err(invalid("need at least one tap and one sample per snapshot"));
    }
    if !(cfg.eps_reg >= 0.0) || !(cfg.sample_rate > 0.0) {
        return Err(invalid("regulariser must be non-negative and sample rate positive"));
    }
    if probe.len() != received.len() {
        return Err(invalid(format!("probe has {} samples, received {}", probe.len(), received.len())));
    }
    let snapshots = probe.len() / cfg.samples_per_snapshot;
    if snapshots == 0 {
        return Err(invalid("signal is shorter than one snapshot period"));
    }
    let l = cfg.num_taps;
    let mut h = vec![Complex64::new(0.0, 0.0); l];
    let mut flat = Vec::with_capacity(snapshots * l);
    let mut flagged = Vec::new();
    let mut energy = 0.0;
    let mut zero_seen = false;
    for n in 0..snapshots * cfg.samples_per_snapshot {
        energy += probe[n].norm_sqr();
        if n >= l {
            energy -= probe[n - l].norm_sqr();
        }
        // running sums drift; recompute exactly once in a while
        if n % 4096 == 0 {
            energy = (0..l.min(n + 1)).map(|j| probe[n - j].norm_sqr()).sum();
        }
        let taps = l.min(n + 1);
        let mut y = Complex64::new(0.0, 0.0);
        for j in 0..taps {
            y += h[j] * probe[n - j];
        }
        let e = received[n] - y;
        if energy <= 0.0 {
            zero_seen = true;
        }
        let g = cfg.mu / (energy.max(0.0) + cfg.eps_reg);
        if g.is_finite() && cfg.mu > 0.0 {
            let ge = e * g;
            for j in 0..taps {
                h[j] += ge * probe[n - j].conj();
            }
        }
        if (n + 1) % cfg.samples_per_snapshot == 0 {
            flat.extend_from_slice(&h);
            if zero_seen {
                flagged.push(n / cfg.samples_per_snapshot);
                zero_seen = false;
            }
        }
    }
    let tvir = Tvir::from_flat(
        flat,
        snapshots,
        l,
        cfg.samples_per_snapshot as f64 / cfg.sample_rate,
        1.0 / cfg.sample_rate,
    )?;
    Ok(NlmsEstimate { tvir, flagged })
}

/// `10 log10(|est - truth|^2 / |truth|^2)`.
pub fn nmse_db(estimate: &[Complex64], truth: &[Complex64]) -> f64 {
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let p: f64 = truth.iter().map(|b| b.norm_sqr()).sum();
    10.0 * (err / p).log10()
}
