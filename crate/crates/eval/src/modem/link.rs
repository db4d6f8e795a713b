//! Time-varying convolution and additive noise.

use num_complex::Complex64;
use rand::Rng;
use uasim_core::{rng::complex_normal, Tvir};

use super::scheme::OfdmScheme;
use crate::error::{invalid, Result};

/// `y[n] = sum_j h(n, j) s[n - j]` at the TVIR's tap rate, where `h(n, .)`
/// interpolates linearly between the snapshots either side of `n` and holds
/// the last snapshot at the end. The output has the input's length.
pub fn convolve_time_varying(signal: &[Complex64], tvir: &Tvir) -> Result<Vec<Complex64>> {
    if signal.is_empty() {
        return Err(invalid("empty signal"));
    }
    let span = signal.len() as f64 * tvir.delay_step();
    if span > tvir.duration() * (1.0 + 1e-9) {
        return Err(invalid(format!("signal lasts {span} s but the TVIR only {} s", tvir.duration())));
    }
    let per_snapshot = tvir.time_step() / tvir.delay_step();
    let last = tvir.num_snapshots() - 1;
    let d = tvir.num_taps();
    let dot = |h: &[Complex64], n: usize| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, hj) in h.iter().enumerate().take(n.min(d - 1) + 1) {
            acc += hj * signal[n - j];
        }
        acc
    };
    Ok((0..signal.len())
        .map(|n| {
            let pos = n as f64 / per_snapshot;
            let a = (pos.floor() as usize).min(last);
            let w = if a == last { 0.0 } else { pos - a as f64 };
            let ya = dot(tvir.snapshot(a), n);
            if w == 0.0 {
                ya
            } else {
                ya + (dot(tvir.snapshot(a + 1), n) - ya) * w
            }
        })
        .collect())
}

/// Adds circular complex Gaussian noise with total power `noise_power`
/// per sample.
pub fn add_awgn<R: Rng + ?Sized>(signal: &mut [Complex64], noise_power: f64, rng: &mut R) {
    if noise_power <= 0.0 {
        return;
    }
    let s = (noise_power / 2.0).sqrt();
    for v in signal.iter_mut() {
        *v += complex_normal(rng) * s;
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

/// Passes `signal` through the TVIR and adds white noise at `snr_db`
/// relative to the measured power of the convolved signal. `+inf` adds no
/// noise.
pub fn apply_channel<R: Rng + ?Sized>(signal: &[Complex64], tvir: &Tvir, snr_db: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(invalid(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let mut y = convolve_time_varying(signal, tvir)?;
    if snr_db.is_finite() {
        let np = mean_power(&y) / 10f64.powf(snr_db / 10.0);
        add_awgn(&mut y, np, rng);
    }
    Ok(y)
}

/// Per-sample SNR in dB that gives `ebn0_db` on each data carrier: the
/// transmitted power is `U / N` and a unitary DFT leaves the per-carrier
/// noise equal to the per-sample noise, so `snr = bits_per_symbol * Eb/N0 * U / N`.
pub fn snr_for_ebn0(scheme: &OfdmScheme, ebn0_db: f64) -> f64 {
    let ratio = (scheme.modulation.bits_per_symbol() * scheme.used_carriers()) as f64 / scheme.num_carriers as f64;
    ebn0_db + 10.0 * ratio.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use uasim_core::rng::stream_rng;

    fn tone(n: usize) -> Vec<Complex64> {
        (0..n).map(|k| Complex64::from_polar(1.0, 0.37 * k as f64)).collect()
    }

    #[test]
    fn identity_channel_is_transparent() {
        let mut data = vec![Complex64::new(0.0, 0.0); 20 * 10];
        for t in 0..20 {
            data[t * 10] = Complex64::new(1.0, 0.0);
        }
        let h = Tvir::from_flat(data, 20, 10, 0.05, 1.0 / 12_000.0).unwrap();
        let s = tone(1000);
        let y = apply_channel(&s, &h, f64::INFINITY, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(y, s);
    }

    #[test]
    fn interpolates_between_snapshots() {
        // gain 0 at snapshot 0 and 1 at snapshot 1, 600 samples apart
        let h = Tvir::from_flat(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], 2, 1, 0.05, 1.0 / 12_000.0)
            .unwrap();
        let s = vec![Complex64::new(1.0, 0.0); 1200];
        let y = convolve_time_varying(&s, &h).unwrap();
        assert!((y[300].re - 0.5).abs() < 1e-12);
        assert_eq!(y[900].re, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = Tvir::zeros(2, 3, 0.05, 1.0 / 12_000.0).unwrap();
        let mut rng = stream_rng(0, 0);
        assert!(apply_channel(&[], &h, 10.0, &mut rng).is_err());
        assert!(apply_channel(&tone(10), &h, f64::NAN, &mut rng).is_err());
        assert!(apply_channel(&tone(2000), &h, 10.0, &mut rng).is_err());
    }

    #[test]
    fn ebn0_conversion() {
        let s = OfdmScheme::preset("NOF1").unwrap();
        assert!((snr_for_ebn0(&s, 5.0) - (5.0 + 10.0 * 2f64.log10())).abs() < 1e-12);
    }
}
