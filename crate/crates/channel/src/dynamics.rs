//! Small-scale time variation of a nominal multipath structure and its
//! rasterisation onto the delay grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use uasim_core::rng::complex_normal;
use uasim_core::{normalize_tvir, NormalizationRecord, Tvir};

use crate::error::{invalid, Result};
use crate::paths::PathSet;

/// Half-width (in taps) of the windowed-sinc placement kernel; the kernel
/// spans `2 * KERNEL_HALF_WIDTH + 1` taps.
pub const KERNEL_HALF_WIDTH: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Per-path fading bandwidth, Hz.
    pub doppler_bandwidth: f64,
    /// Stationary standard deviation of each real component of the gain
    /// perturbation.
    pub fading_std: f64,
    /// Standard deviation of the per-snapshot delay increment, s.
    pub delay_drift_std: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { doppler_bandwidth: 1.0, fading_std: 0.1, delay_drift_std: 0.0 }
    }
}

impl DynamicsConfig {
    pub fn still() -> Self {
        Self { doppler_bandwidth: 0.0, fading_std: 0.0, delay_drift_std: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.doppler_bandwidth) && ok(self.fading_std) && ok(self.delay_drift_std) {
            Ok(())
        } else {
            Err(invalid(format!("dynamics parameters must be finite and non-negative: {self:?}")))
        }
    }
}

/// Shape and sampling of the generated TVIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvirDims {
    pub snapshots: usize,
    pub taps: usize,
    pub time_step: f64,
    pub delay_step: f64,
    /// Tap the direct path starts on, and the straightening anchor.
    pub anchor_index: usize,
}

impl Default for TvirDims {
    fn default() -> Self {
        Self {
            snapshots: 20,
            taps: 250,
            time_step: uasim_core::DEFAULT_TIME_STEP,
            delay_step: uasim_core::DEFAULT_DELAY_STEP,
            anchor_index: uasim_core::DEFAULT_ANCHOR_INDEX,
        }
    }
}

impl TvirDims {
    /// Longest excess delay that still lands inside the delay window with the
    /// whole placement kernel.
    pub fn max_excess_delay(&self) -> f64 {
        let room = self.taps as i64 - 1 - self.anchor_index as i64 - KERNEL_HALF_WIDTH;
        room.max(1) as f64 * self.delay_step
    }
}

/// Unit-mean complex gain process `1 + u_t` with `u` a stationary AR(1):
/// `u_t = rho u_{t-1} + sqrt(1 - rho^2) sigma w_t`, `rho = exp(-2 pi B dt)`.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    rho: f64,
    innovation: f64,
    u: Complex64,
}

impl FadingProcess {
    /// Starts from a draw of the stationary distribution.
    pub fn new<R: Rng + ?Sized>(bandwidth: f64, time_step: f64, std: f64, rng: &mut R) -> Self {
        let rho = (-2.0 * PI * bandwidth * time_step).exp();
        let innovation = std * (1.0 - rho * rho).max(0.0).sqrt();
        let u = if std > 0.0 { complex_normal(rng) * std } else { Complex64::new(0.0, 0.0) };
        Self { rho, innovation, u }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn current(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) + self.u
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Complex64 {
        if self.innovation > 0.0 {
            self.u = self.u * self.rho + complex_normal(rng) * self.innovation;
        } else {
            self.u *= self.rho;
        }
        self.current()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Adds `gain` at fractional tap position `pos` with a Hann-windowed sinc.
/// Returns `false` (and adds nothing) when `pos` lies outside the window.
pub fn place_arrival(cir: &mut [Complex64], pos: f64, gain: Complex64) -> bool {
    let d = cir.len() as i64;
    if !(pos >= 0.0 && pos <= (d - 1) as f64) {
        return false;
    }
    let center = pos.round() as i64;
    let half = KERNEL_HALF_WIDTH as f64 + 1.0;
    for k in center - KERNEL_HALF_WIDTH..=center + KERNEL_HALF_WIDTH {
        if k < 0 || k >= d {
            continue;
        }
        let u = k as f64 - pos;
        let w = 0.5 * (1.0 + (PI * u / half).cos());
        let h = sinc(u) * w;
        if h != 0.0 {
            cir[k as usize] += gain * h;
        }
    }
    true
}

/// A generated TVIR with its straightening record and the number of
/// (path, snapshot) arrivals that fell outside the delay window.
#[derive(Debug, Clone)]
pub struct EvolvedTvir {
    pub tvir: Tvir,
    pub normalization: NormalizationRecord,
    pub dropped: usize,
}

/// Evolves `nominal` over `dims.snapshots` snapshots and straightens the
/// result.
pub fn evolve_tvir<R: Rng + ?Sized>(
    nominal: &PathSet,
    dims: &TvirDims,
    dynamics: &DynamicsConfig,
    rng: &mut R,
) -> Result<EvolvedTvir> {
    dynamics.validate()?;
    if nominal.is_empty() {
        return Err(invalid("nominal path set is empty"));
    }
    if dims.snapshots == 0 || dims.taps == 0 || dims.anchor_index >= dims.taps {
        return Err(invalid(format!("bad TVIR dimensions {dims:?}")));
    }
    let origin = nominal.first_delay();
    let mut fading: Vec<FadingProcess> = nominal
        .paths
        .iter()
        .map(|_| FadingProcess::new(dynamics.doppler_bandwidth, dims.time_step, dynamics.fading_std, rng))
        .collect();
    let mut delays: Vec<f64> = nominal.paths.iter().map(|p| p.delay).collect();
    let mut data = vec![Complex64::new(0.0, 0.0); dims.snapshots * dims.taps];
    let mut dropped = 0;
    for t in 0..dims.snapshots {
        let cir = &mut data[t * dims.taps..(t + 1) * dims.taps];
        for (p, path) in nominal.paths.iter().enumerate() {
            if t > 0 {
                fading[p].advance(rng);
                if dynamics.delay_drift_std > 0.0 {
                    let step: f64 = StandardNormal.sample(rng);
                    delays[p] += dynamics.delay_drift_std * step;
                }
            }
            let pos = dims.anchor_index as f64 + (delays[p] - origin) / dims.delay_step;
            if !place_arrival(cir, pos, path.complex_gain * fading[p].current()) {
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} arrivals fell outside the delay window and were dropped");
    }
    let raw = Tvir::from_flat(data, dims.snapshots, dims.taps, dims.time_step, dims.delay_step)?;
    let (tvir, normalization) = normalize_tvir(&raw, dims.anchor_index)?;
    Ok(EvolvedTvir { tvir, normalization, dropped })
}
