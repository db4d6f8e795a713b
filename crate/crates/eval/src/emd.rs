//! Empirical mode decomposition by envelope sifting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmdConfig {
    pub max_imfs: usize,
    /// Sifting stops once `sum (h_prev - h)^2 / sum h_prev^2` falls below this.
    pub sd_stop: f64,
    pub max_sifts: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self { max_imfs: 10, sd_stop: 0.3, max_sifts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl EmdResult {
    /// Sum of every IMF and the residue.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            out.iter_mut().zip(imf).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Interior local maxima and minima; a plateau counts once, at its first
/// sample.
pub fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let (mut max, mut min) = (Vec::new(), Vec::new());
    for i in 1..x.len().saturating_sub(1) {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] {
            max.push(i);
        } else if x[i] < x[i - 1] && x[i] <= x[i + 1] {
            min.push(i);
        }
    }
    (max, min)
}

pub fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Natural cubic spline through `(t, y)` with strictly increasing `t`,
/// evaluated at `0, 1, .., n - 1`.
fn natural_spline(t: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let k = t.len();
    if k == 2 {
        let s = (y[1] - y[0]) / (t[1] - t[0]);
        return (0..n).map(|i| y[0] + s * (i as f64 - t[0])).collect();
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives m[1..k-1] from the tridiagonal system, m[0] = m[k-1] = 0
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut sup = vec![0.0; k];
    for i in 1..k - 1 {
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    for i in 2..k - 1 {
        let f = h[i - 1] / diag[i - 1];
        diag[i] -= f * sup[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    let mut m = vec![0.0; k];
    for i in (1..k - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    let mut seg = 0;
    (0..n)
        .map(|i| {
            let x = i as f64;
            while seg + 2 < k && x > t[seg + 1] {
                seg += 1;
            }
            let (a, b, hs) = (t[seg + 1] - x, x - t[seg], h[seg]);
            m[seg] * a.powi(3) / (6.0 * hs)
                + m[seg + 1] * b.powi(3) / (6.0 * hs)
                + (y[seg] / hs - m[seg] * hs / 6.0) * a
                + (y[seg + 1] / hs - m[seg + 1] * hs / 6.0) * b
        })
        .collect()
}

/// Spline envelope through the extrema at `idx`, with the two outermost
/// extrema at each end mirrored about the first and last samples.
fn envelope(x: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = x.len();
    let end = (n - 1) as f64;
    let mut pts: Vec<(f64, f64)> = idx.iter().map(|&i| (i as f64, x[i])).collect();
    for &i in idx.iter().take(2) {
        pts.push((-(i as f64), x[i]));
    }
    for &i in idx.iter().rev().take(2) {
        pts.push((2.0 * end - i as f64, x[i]));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let (t, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    natural_spline(&t, &y, n)
}

/// Extracts one IMF from `r`, or `None` when `r` has no maximum or no
/// minimum left to build envelopes from.
fn sift(r: &[f64], cfg: &EmdConfig) -> Option<Vec<f64>> {
    let (max, min) = extrema(r);
    if max.is_empty() || min.is_empty() {
        return None;
    }
    let mut h = r.to_vec();
    for _ in 0..cfg.max_sifts {
        let (max, min) = extrema(&h);
        if max.is_empty() || min.is_empty() {
            break;
        }
        let (up, lo) = (envelope(&h, &max), envelope(&h, &min));
        let power: f64 = h.iter().map(|v| v * v).sum();
        let mut diff = 0.0;
        for ((v, u), l) in h.iter_mut().zip(&up).zip(&lo) {
            let m = 0.5 * (u + l);
            *v -= m;
            diff += m * m;
        }
        let sd = if power > 0.0 { diff / power } else { 0.0 };
        let (max, min) = extrema(&h);
        let balanced = (max.len() + min.len()).abs_diff(zero_crossings(&h)) <= 1;
        if sd < cfg.sd_stop && balanced {
            break;
        }
    }
    Some(h)
}

/// Decomposes `x` into intrinsic mode functions plus a residue. Extraction
/// stops after `max_imfs` or once the residue has no full oscillation left
/// (which includes every monotone residue).
pub fn emd(x: &[f64], cfg: &EmdConfig) -> Result<EmdResult> {
    if x.len() < 4 {
        return Err(invalid(format!("EMD needs at least 4 samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("series contains non-finite values"));
    }
    let mut residue = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < cfg.max_imfs {
        let Some(imf) = sift(&residue, cfg) else { break };
        residue.iter_mut().zip(&imf).for_each(|(r, v)| *r -= v);
        imfs.push(imf);
    }
    Ok(EmdResult { imfs, residue })
}
