//! Complex CIR <-> real feature mapping.
//!
//! Each CIR of `D` taps becomes a real row `[A_1..A_D, sin φ_1..sin φ_D,
//! cos φ_1..cos φ_D]`. Zero taps use the convention `(sin, cos) = (0, 1)`.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::tvir::Tvir;

/// Maps one CIR to its `3D` real feature row.
pub fn featurize(cir: &[Complex64]) -> Result<Vec<f64>> {
    if cir.is_empty() {
        return Err(invalid("cannot featurize an empty CIR"));
    }
    let d = cir.len();
    let mut row = vec![0.0; 3 * d];
    for (j, x) in cir.iter().enumerate() {
        if !x.re.is_finite() || !x.im.is_finite() {
            return Err(invalid(format!("non-finite tap {j}")));
        }
        let amp = x.norm();
        let (sin, cos) = if amp > 0.0 { (x.im / amp, x.re / amp) } else { (0.0, 1.0) };
        row[j] = amp;
        row[d + j] = sin;
        row[2 * d + j] = cos;
    }
    Ok(row)
}

/// Result of mapping a feature row back to complex taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Defeaturized {
    pub cir: Vec<Complex64>,
    /// Taps with positive amplitude whose sin/cos pair was exactly zero; their
    /// phase was set to 0.
    pub degenerate_taps: Vec<usize>,
}

/// Maps a `3D` real feature row back to `D` complex taps.
///
/// The phase is `atan2(sin, cos)`, so pairs that drifted off the unit circle
/// are implicitly renormalised. Negative amplitudes are clamped to zero.
pub fn defeaturize(h: &[f64]) -> Result<Defeaturized> {
    if h.is_empty() || h.len() % 3 != 0 {
        return Err(invalid(format!("feature row length {} is not a positive multiple of 3", h.len())));
    }
    let d = h.len() / 3;
    let mut cir = Vec::with_capacity(d);
    let mut degenerate_taps = Vec::new();
    for j in 0..d {
        let amp = h[j].max(0.0);
        let (s, c) = (h[d + j], h[2 * d + j]);
        let phase = if s == 0.0 && c == 0.0 {
            if amp > 0.0 {
                degenerate_taps.push(j);
            }
            0.0
        } else {
            s.atan2(c)
        };
        cir.push(Complex64::from_polar(amp, phase));
    }
    Ok(Defeaturized { cir, degenerate_taps })
}

/// A TVIR in feature form: `rows` rows of width `3 * taps`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeq {
    data: Vec<f64>,
    rows: usize,
    taps: usize,
}

impl FeatureSeq {
    pub fn from_flat(data: Vec<f64>, rows: usize, taps: usize) -> Result<Self> {
        if rows == 0 || taps == 0 || data.len() != rows * 3 * taps {
            return Err(invalid(format!(
                "feature buffer of {} values does not match {rows} rows x {} columns",
                data.len(),
                3 * taps
            )));
        }
        Ok(Self { data, rows, taps })
    }

    pub fn from_tvir(tvir: &Tvir) -> Result<Self> {
        let mut data = Vec::with_capacity(tvir.num_snapshots() * 3 * tvir.num_taps());
        for s in tvir.snapshots() {
            data.extend(featurize(s)?);
        }
        Self::from_flat(data, tvir.num_snapshots(), tvir.num_taps())
    }

    /// Converts back to a TVIR with the given sampling steps. Returns the
    /// total number of degenerate taps alongside.
    pub fn to_tvir(&self, time_step: f64, delay_step: f64) -> Result<(Tvir, usize)> {
        let mut data = Vec::with_capacity(self.rows * self.taps);
        let mut degenerate = 0;
        for r in 0..self.rows {
            let out = defeaturize(self.row(r))?;
            degenerate += out.degenerate_taps.len();
            data.extend(out.cir);
        }
        Ok((Tvir::from_flat(data, self.rows, self.taps, time_step, delay_step)?, degenerate))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn width(&self) -> usize {
        3 * self.taps
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.data[r * w..(r + 1) * w]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
