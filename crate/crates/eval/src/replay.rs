//! Replay baselines built from a measured TVIR.
//!
//! Direct replay uses the measurement as is. Stochastic replay keeps the
//! slow trend of every tap and redraws the fast fluctuation around it from a
//! complex AR(1) process fitted to the measurement.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uasim_core::{rng::complex_normal, Tvir};

use crate::emd::{emd, EmdConfig};
use crate::error::{invalid, EvalError, Result};

/// Largest lag-1 correlation magnitude allowed in a fitted fast process.
const MAX_CORRELATION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    /// Shortest measurement accepted for decomposition, in seconds.
    pub min_duration: f64,
    pub emd: EmdConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { min_duration: 8.0, emd: EmdConfig::default() }
    }
}

pub fn direct_replay(measured: &Tvir) -> Tvir {
    measured.clone()
}

/// The measurement split as `trend + fast`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSplit {
    pub trend: Tvir,
    pub fast: Tvir,
}

/// Slow part of a real series: the EMD residue plus the lowest-frequency
/// IMF when at least two IMFs were extracted.
fn real_trend(x: &[f64], cfg: &EmdConfig) -> Result<Vec<f64>> {
    let r = emd(x, cfg)?;
    let mut trend = r.residue;
    if r.imfs.len() >= 2 {
        let last = &r.imfs[r.imfs.len() - 1];
        trend.iter_mut().zip(last).for_each(|(t, v)| *t += v);
    }
    Ok(trend)
}

/// Decomposes the real and imaginary part of every tap independently.
pub fn trend_split(tvir: &Tvir, cfg: &EmdConfig) -> Result<TrendSplit> {
    let (t_len, d) = (tvir.num_snapshots(), tvir.num_taps());
    let per_tap: Vec<Vec<Complex64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let re: Vec<f64> = (0..t_len).map(|t| tvir.get(t, j).re).collect();
            let im: Vec<f64> = (0..t_len).map(|t| tvir.get(t, j).im).collect();
            let (a, b) = (real_trend(&re, cfg)?, real_trend(&im, cfg)?);
            Ok(a.into_iter().zip(b).map(|(r, i)| Complex64::new(r, i)).collect())
        })
        .collect::<Result<_>>()?;
    let mut trend = vec![Complex64::new(0.0, 0.0); t_len * d];
    for (j, col) in per_tap.iter().enumerate() {
        for (t, v) in col.iter().enumerate() {
            trend[t * d + j] = *v;
        }
    }
    let fast = tvir.as_slice().iter().zip(&trend).map(|(x, m)| x - m).collect();
    let (dt, ds) = (tvir.time_step(), tvir.delay_step());
    Ok(TrendSplit { trend: Tvir::from_flat(trend, t_len, d, dt, ds)?, fast: Tvir::from_flat(fast, t_len, d, dt, ds)? })
}

/// Zero-mean complex AR(1) fit: `(E|f|^2, rho)` with
/// `rho = sum f_{t+1} conj(f_t) / sum |f_t|^2`, clamped inside the unit disc.
pub fn fit_ar1(f: &[Complex64]) -> (f64, Complex64) {
    let var = f.iter().map(|v| v.norm_sqr()).sum::<f64>() / f.len().max(1) as f64;
    let den: f64 = f.iter().take(f.len().saturating_sub(1)).map(|v| v.norm_sqr()).sum();
    if den <= 0.0 {
        return (var, Complex64::new(0.0, 0.0));
    }
    let num: Complex64 = f.windows(2).map(|w| w[1] * w[0].conj()).sum();
    let mut rho = num / den;
    if rho.norm() > MAX_CORRELATION {
        rho *= MAX_CORRELATION / rho.norm();
    }
    (var, rho)
}

fn sample_ar1<R: Rng + ?Sized>(len: usize, var: f64, rho: Complex64, rng: &mut R) -> Vec<Complex64> {
    // complex_normal has variance 2
    let innov = (var * (1.0 - rho.norm_sqr()) / 2.0).sqrt();
    let mut f = complex_normal(rng) * (var / 2.0).sqrt();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(f);
        f = rho * f + complex_normal(rng) * innov;
    }
    out
}

/// Regenerates the measurement as `trend + fresh AR(1) fast part` and cuts
/// the result into consecutive TVIRs of `target_snapshots` snapshots.
pub fn stochastic_replay<R: Rng + ?Sized>(
    measured: &Tvir,
    target_snapshots: usize,
    cfg: &ReplayConfig,
    rng: &mut R,
) -> Result<Vec<Tvir>> {
    if measured.duration() < cfg.min_duration * (1.0 - 1e-9) {
        return Err(EvalError::TooShort { duration: measured.duration(), required: cfg.min_duration });
    }
    let (t_len, d) = (measured.num_snapshots(), measured.num_taps());
    if target_snapshots == 0 || target_snapshots > t_len {
        return Err(invalid(format!("cannot cut {t_len} snapshots into segments of {target_snapshots}")));
    }
    let split = trend_split(measured, &cfg.emd)?;
    let mut out = split.trend.as_slice().to_vec();
    for j in 0..d {
        let f: Vec<Complex64> = (0..t_len).map(|t| split.fast.get(t, j)).collect();
        let (var, rho) = fit_ar1(&f);
        if var <= 0.0 {
            continue;
        }
        for (t, v) in sample_ar1(t_len, var, rho, rng).into_iter().enumerate() {
            out[t * d + j] += v;
        }
    }
    let full = Tvir::from_flat(out, t_len, d, measured.time_step(), measured.delay_step())?;
    (0..t_len / target_snapshots)
        .map(|k| Ok(full.slice_time(k * target_snapshots, target_snapshots)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use uasim_core::rng::stream_rng;

    fn smooth(t_len: usize, d: usize) -> Tvir {
        let data = (0..t_len * d)
            .map(|i| {
                let (t, j) = ((i / d) as f64 / t_len as f64, (i % d) as f64);
                Complex64::new(1.0 + 0.5 * t + 0.1 * j, -0.3 * t * t + 0.05 * j)
            })
            .collect();
        Tvir::from_flat(data, t_len, d, 0.05, 1.0 / 12_000.0).unwrap()
    }

    #[test]
    fn direct_replay_is_identity() {
        let x = smooth(20, 3);
        assert_eq!(direct_replay(&x), x);
        assert_eq!(direct_replay(&x), direct_replay(&x));
    }

    #[test]
    fn too_short_window_is_rejected() {
        let x = smooth(100, 2);
        let err = stochastic_replay(&x, 20, &ReplayConfig::default(), &mut stream_rng(0, 0)).unwrap_err();
        assert!(matches!(err, EvalError::TooShort { .. }));
    }

    #[test]
    fn smooth_channel_replays_its_trend() {
        let x = smooth(200, 3);
        let split = trend_split(&x, &EmdConfig::default()).unwrap();
        assert!(split.fast.energy() < 1e-20);
        let segs = stochastic_replay(&x, 20, &ReplayConfig::default(), &mut stream_rng(1, 0)).unwrap();
        assert_eq!(segs.len(), 10);
        for (k, s) in segs.iter().enumerate() {
            assert_eq!(s.num_snapshots(), 20);
            let orig = x.slice_time(20 * k, 20).unwrap();
            let err: f64 = s.as_slice().iter().zip(orig.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!((err / orig.energy()).sqrt() < 0.05);
        }
    }

    #[test]
    fn ar1_fit_recovers_parameters() {
        let rho = Complex64::from_polar(0.8, 0.4);
        let f = sample_ar1(50_000, 2.0, rho, &mut stream_rng(3, 0));
        let (v, r) = fit_ar1(&f);
        assert!((v - 2.0).abs() < 0.1, "{v}");
        assert!((r - rho).norm() < 0.02, "{r}");
        assert_eq!(fit_ar1(&[Complex64::new(0.0, 0.0); 4]).1, Complex64::new(0.0, 0.0));
    }
}
