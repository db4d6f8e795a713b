//! Time-axis resampling by per-tap linear interpolation.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::tvir::Tvir;

/// Resamples the TVIR along the time axis to `target_rate` snapshots per
/// second. The snapshot count scales by `target_rate / current_rate`
/// (rounded), so the window duration is preserved to within one target
/// period. Real and imaginary parts are interpolated linearly and
/// independently; positions past the last snapshot hold its value.
pub fn resample_time(tvir: &Tvir, target_rate: f64) -> Result<Tvir> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(invalid(format!("target rate must be positive, got {target_rate}")));
    }
    let current_rate = tvir.time_rate();
    let t = tvir.num_snapshots();
    let ratio = target_rate / current_rate;
    if (ratio - 1.0).abs() < 1e-12 {
        return Ok(tvir.clone());
    }
    if ratio > 1.0 && t < 2 {
        return Err(invalid("upsampling needs at least two snapshots"));
    }
    let new_t = (t as f64 * ratio).round() as usize;
    if new_t == 0 {
        return Err(invalid(format!(
            "resampling {t} snapshots from {current_rate} Hz to {target_rate} Hz leaves none"
        )));
    }
    let d = tvir.num_taps();
    let step = current_rate / target_rate;
    let mut data = Vec::with_capacity(new_t * d);
    for k in 0..new_t {
        let pos = k as f64 * step;
        let i0 = (pos.floor() as usize).min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        let frac = if i1 == i0 { 0.0 } else { pos - i0 as f64 };
        let (a, b) = (tvir.snapshot(i0), tvir.snapshot(i1));
        data.extend(a.iter().zip(b).map(|(&x, &y)| {
            Complex64::new(x.re + frac * (y.re - x.re), x.im + frac * (y.im - x.im))
        }));
    }
    Tvir::from_flat(data, new_t, d, 1.0 / target_rate, tvir.delay_step())
}
