//! Straightening: amplitude normalisation by the first CIR's strongest tap
//! plus circular delay alignment of that tap to a fixed anchor index.

use num_complex::Complex64;

use crate::error::{invalid, CoreError, Result};
use crate::tvir::Tvir;

/// Delay index the dominant arrival is aligned to.
pub const DEFAULT_ANCHOR_INDEX: usize = 20;

/// Wrapped-around taps above this fraction of the total energy (-40 dB) are
/// reported as a pathological straightening.
const WRAP_ENERGY_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    /// Amplitude divisor applied to every element.
    pub scale: f64,
    /// Circular shift applied along the delay axis (positive moves taps later).
    pub shift: i64,
    pub anchor_index: usize,
}

impl NormalizationRecord {
    pub fn identity(anchor_index: usize) -> Self {
        Self { scale: 1.0, shift: 0, anchor_index }
    }
}

fn rotate(src: &[Complex64], dst: &mut [Complex64], shift: i64, gain: f64) {
    let d = src.len() as i64;
    for (j, &x) in src.iter().enumerate() {
        let k = (j as i64 + shift).rem_euclid(d) as usize;
        dst[k] = x * gain;
    }
}

/// Fraction of the TVIR's energy carried by taps that wrap around the delay
/// window when circularly shifted by `shift`.
pub fn wrapped_energy_fraction(tvir: &Tvir, shift: i64) -> f64 {
    let d = tvir.num_taps() as i64;
    let total = tvir.energy();
    if total == 0.0 || shift == 0 {
        return 0.0;
    }
    let wrapped: f64 = tvir
        .snapshots()
        .map(|s| {
            s.iter()
                .enumerate()
                .filter(|(j, _)| {
                    let k = *j as i64 + shift;
                    !(0..d).contains(&k)
                })
                .map(|(_, x)| x.norm_sqr())
                .sum::<f64>()
        })
        .sum();
    wrapped / total
}

/// Scales the TVIR so the strongest tap of its first snapshot has amplitude
/// exactly 1 and circularly shifts every snapshot so that tap lands on
/// `anchor_index`. Ties go to the lowest tap index. Later snapshots may
/// exceed unit amplitude.
pub fn normalize_tvir(tvir: &Tvir, anchor_index: usize) -> Result<(Tvir, NormalizationRecord)> {
    let d = tvir.num_taps();
    if anchor_index >= d {
        return Err(invalid(format!("anchor index {anchor_index} outside 0..{d}")));
    }
    let first = tvir.snapshot(0);
    let mut peak = 0;
    let mut peak_amp = 0.0;
    for (j, x) in first.iter().enumerate() {
        let a = x.norm();
        if a > peak_amp {
            peak_amp = a;
            peak = j;
        }
    }
    if peak_amp == 0.0 {
        return Err(CoreError::NormalizationDegenerate("first snapshot is all zeros".into()));
    }
    let shift = anchor_index as i64 - peak as i64;
    let wrapped = wrapped_energy_fraction(tvir, shift);
    if wrapped >= WRAP_ENERGY_LIMIT {
        log::debug!(
            "straightening wraps {:.1} dB of energy around the delay window",
            10.0 * wrapped.log10()
        );
    }

    let gain = 1.0 / peak_amp;
    let mut out = vec![Complex64::new(0.0, 0.0); tvir.as_slice().len()];
    for (src, dst) in tvir.snapshots().zip(out.chunks_exact_mut(d)) {
        rotate(src, dst, shift, gain);
    }
    // Division can leave the anchor a few ulps off unit modulus; pin it.
    let anchor = &mut out[anchor_index];
    for _ in 0..4 {
        let a = anchor.norm();
        if a == 1.0 {
            break;
        }
        *anchor /= a;
    }
    let record = NormalizationRecord { scale: peak_amp, shift, anchor_index };
    let tvir = Tvir::from_flat(out, tvir.num_snapshots(), d, tvir.time_step(), tvir.delay_step())?;
    Ok((tvir, record))
}

/// Undoes [`normalize_tvir`]. Exact whenever the taps that wrapped around
/// were zero.
pub fn denormalize_tvir(tvir: &Tvir, rec: &NormalizationRecord) -> Result<Tvir> {
    let d = tvir.num_taps();
    if rec.anchor_index >= d {
        return Err(invalid(format!(
            "record anchor {} does not fit a {d}-tap TVIR",
            rec.anchor_index
        )));
    }
    if !(rec.scale > 0.0) {
        return Err(invalid(format!("record scale must be positive, got {}", rec.scale)));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); tvir.as_slice().len()];
    for (src, dst) in tvir.snapshots().zip(out.chunks_exact_mut(d)) {
        rotate(src, dst, -rec.shift, rec.scale);
    }
    Tvir::from_flat(out, tvir.num_snapshots(), d, tvir.time_step(), tvir.delay_step())
}
