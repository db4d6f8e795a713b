//! Channel statistics computed from a single TVIR.
//!
//! Delays are measured from tap 0 and frequencies from DC. Every spread and
//! coherence measure depends only on ratios of powers, so it is unchanged by
//! a global complex gain on the TVIR.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use uasim_core::Tvir;

use crate::error::{invalid, Result};

pub const DEFAULT_SPREAD_THRESHOLD_DB: f64 = -10.0;
pub const DEFAULT_SIGNIFICANT_THRESHOLD_DB: f64 = -26.0;
pub const DEFAULT_COHERENCE_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Delay-domain PDP is zero-padded to at least this many times its length
/// before the frequency correlation is read off.
const BANDWIDTH_OVERSAMPLING: usize = 8;

/// `PDP_j`: mean over snapshots of `|x_{t,j}|^2`.
pub fn power_delay_profile(tvir: &Tvir) -> Vec<f64> {
    let mut pdp = vec![0.0; tvir.num_taps()];
    for row in tvir.snapshots() {
        for (p, x) in pdp.iter_mut().zip(row) {
            *p += x.norm_sqr();
        }
    }
    let n = tvir.num_snapshots() as f64;
    pdp.iter_mut().for_each(|p| *p /= n);
    pdp
}

fn check_pdp(pdp: &[f64]) -> Result<f64> {
    if pdp.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid("PDP entries must be finite and non-negative"));
    }
    let total: f64 = pdp.iter().sum();
    if total <= 0.0 {
        return Err(invalid("PDP has no power"));
    }
    Ok(total)
}

/// Span between the first and last taps whose power is at least
/// `threshold_db` relative to the PDP peak, in seconds.
pub fn delay_spread(pdp: &[f64], delay_step: f64, threshold_db: f64) -> Result<f64> {
    check_pdp(pdp)?;
    let peak = pdp.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 10f64.powf(threshold_db / 10.0);
    let first = pdp.iter().position(|&p| p >= floor).unwrap_or(0);
    let last = pdp.iter().rposition(|&p| p >= floor).unwrap_or(0);
    Ok((last - first) as f64 * delay_step)
}

/// First moment of the PDP over delay, in seconds.
pub fn mean_delay(pdp: &[f64], delay_step: f64) -> Result<f64> {
    let total = check_pdp(pdp)?;
    let m: f64 = pdp.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
    Ok(m / total * delay_step)
}

/// Square root of the centred second moment of the PDP, in seconds.
pub fn rms_delay_spread(pdp: &[f64], delay_step: f64) -> Result<f64> {
    let total = check_pdp(pdp)?;
    let mean = pdp.iter().enumerate().map(|(j, p)| j as f64 * p).sum::<f64>() / total;
    let var: f64 = pdp.iter().enumerate().map(|(j, p)| (j as f64 - mean).powi(2) * p).sum::<f64>() / total;
    Ok(var.max(0.0).sqrt() * delay_step)
}

/// Doppler power spectrum: `|DFT_t x_{t,j}|^2` summed over taps, with
/// frequencies in Hz ordered from `-1/(2 dt)` upwards.
pub fn doppler_spectrum(tvir: &Tvir) -> (Vec<f64>, Vec<f64>) {
    let (t_len, d) = (tvir.num_snapshots(), tvir.num_taps());
    let fft = FftPlanner::new().plan_fft_forward(t_len);
    let mut power = vec![0.0; t_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); t_len];
    for j in 0..d {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = tvir.get(t, j);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
    }
    let df = 1.0 / (t_len as f64 * tvir.time_step());
    let half = t_len / 2;
    // fftshift: bin k >= ceil(T/2) is the negative frequency k - T
    let order: Vec<usize> = (0..t_len).map(|i| (i + t_len - half) % t_len).collect();
    let freqs = order
        .iter()
        .map(|&k| if k >= t_len - half { k as f64 - t_len as f64 } else { k as f64 })
        .map(|k| k * df)
        .collect();
    let spectrum = order.iter().map(|&k| power[k]).collect();
    (freqs, spectrum)
}

/// Width between the lowest and highest Doppler bins whose power is at least
/// `threshold_db` relative to the spectral peak, in Hz.
pub fn doppler_spread(tvir: &Tvir, threshold_db: f64) -> Result<f64> {
    if tvir.num_snapshots() < 2 {
        return Err(invalid("Doppler spread needs at least two snapshots"));
    }
    let (freqs, spec) = doppler_spectrum(tvir);
    let peak = spec.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(invalid("TVIR is identically zero"));
    }
    let floor = peak * 10f64.powf(threshold_db / 10.0);
    let above: Vec<f64> = freqs.iter().zip(&spec).filter(|(_, &p)| p >= floor).map(|(&f, _)| f).collect();
    let lo = above.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = above.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(hi - lo)
}

/// A coherence measure together with whether the correlation never fell
/// below the threshold inside the observable range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub value: f64,
    pub saturated: bool,
}

/// Time-lag correlation `|mean_t sum_j x_{t,j} conj(x_{t+k,j})|`, normalised
/// by its zero-lag value, for `k = 0..T`.
pub fn time_correlation(tvir: &Tvir) -> Result<Vec<f64>> {
    let t_len = tvir.num_snapshots();
    let lag = |k: usize| {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..t_len - k {
            for (a, b) in tvir.snapshot(t).iter().zip(tvir.snapshot(t + k)) {
                acc += a * b.conj();
            }
        }
        acc.norm() / (t_len - k) as f64
    };
    let r0 = lag(0);
    if r0 <= 0.0 {
        return Err(invalid("TVIR has no energy"));
    }
    Ok((0..t_len).map(|k| lag(k) / r0).collect())
}

/// Smallest lag at which the time correlation drops below `threshold`; the
/// window duration with `saturated` set if it never does.
pub fn coherence_time(tvir: &Tvir, threshold: f64) -> Result<Coherence> {
    if tvir.num_snapshots() < 2 {
        return Err(invalid("coherence time needs at least two snapshots"));
    }
    let r = time_correlation(tvir)?;
    Ok(match r.iter().position(|&v| v < threshold) {
        Some(k) => Coherence { value: k as f64 * tvir.time_step(), saturated: false },
        None => Coherence { value: tvir.duration(), saturated: true },
    })
}

/// Frequency correlation `|DFT(PDP)| / sum(PDP)` on a zero-padded grid, as
/// `(frequency, correlation)` pairs from DC up to Nyquist.
pub fn frequency_correlation(pdp: &[f64], delay_step: f64) -> Result<Vec<(f64, f64)>> {
    let total = check_pdp(pdp)?;
    let m = (BANDWIDTH_OVERSAMPLING * pdp.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (b, &p) in buf.iter_mut().zip(pdp) {
        b.re = p;
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * delay_step);
    Ok((0..=m / 2).map(|k| (k as f64 * df, buf[k].norm() / total)).collect())
}

/// First frequency at which the frequency correlation drops below
/// `threshold`, linearly interpolated between grid points; Nyquist with
/// `saturated` set if it never does.
pub fn coherence_bandwidth(pdp: &[f64], delay_step: f64, threshold: f64) -> Result<Coherence> {
    let c = frequency_correlation(pdp, delay_step)?;
    Ok(match c.iter().position(|&(_, v)| v < threshold) {
        Some(0) => Coherence { value: 0.0, saturated: false },
        Some(k) => {
            let ((f0, c0), (f1, c1)) = (c[k - 1], c[k]);
            Coherence { value: f0 + (c0 - threshold) / (c0 - c1) * (f1 - f0), saturated: false }
        }
        None => Coherence { value: 0.5 / delay_step, saturated: true },
    })
}

fn significant_in(row: &[Complex64], threshold_db: f64) -> Option<impl Iterator<Item = &Complex64>> {
    let peak = row.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let floor = peak * 10f64.powf(threshold_db / 20.0);
    Some(row.iter().filter(move |x| x.norm() > floor))
}

/// `(amplitude, phase)` of every tap strictly above `threshold_db` relative
/// to the strongest tap of its snapshot, pooled over snapshots. All-zero
/// snapshots are skipped.
pub fn significant_taps(tvir: &Tvir, threshold_db: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (t, row) in tvir.snapshots().enumerate() {
        match significant_in(row, threshold_db) {
            Some(taps) => out.extend(taps.map(|x| (x.norm(), x.arg()))),
            None => log::warn!("snapshot {t} is all zero; skipped"),
        }
    }
    out
}

/// The eight summary characteristics of one TVIR.
///
/// `num_significant_taps` is the mean per-snapshot count at -26 dB and
/// `total_gain_db` is `10 log10(sum(PDP))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristics {
    pub mean_delay: f64,
    pub delay_spread_10db: f64,
    pub rms_delay_spread: f64,
    pub doppler_spread_10db: f64,
    pub coherence_time: f64,
    pub coherence_bandwidth: f64,
    pub num_significant_taps: f64,
    pub total_gain_db: f64,
    pub coherence_time_saturated: bool,
    pub coherence_bandwidth_saturated: bool,
}

pub const CHARACTERISTICS_HEADER: &str = "mean_delay_s,delay_spread_10db_s,rms_delay_spread_s,doppler_spread_10db_hz,\
coherence_time_s,coherence_bandwidth_hz,num_significant_taps,total_gain_db,coherence_time_saturated,\
coherence_bandwidth_saturated";

impl Characteristics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.mean_delay,
            self.delay_spread_10db,
            self.rms_delay_spread,
            self.doppler_spread_10db,
            self.coherence_time,
            self.coherence_bandwidth,
            self.num_significant_taps,
            self.total_gain_db,
            self.coherence_time_saturated,
            self.coherence_bandwidth_saturated
        )
    }

    /// Values in header order; flags become 0/1.
    pub fn values(&self) -> [f64; 10] {
        [
            self.mean_delay,
            self.delay_spread_10db,
            self.rms_delay_spread,
            self.doppler_spread_10db,
            self.coherence_time,
            self.coherence_bandwidth,
            self.num_significant_taps,
            self.total_gain_db,
            self.coherence_time_saturated as u8 as f64,
            self.coherence_bandwidth_saturated as u8 as f64,
        ]
    }
}

/// All characteristics at the default thresholds. Needs at least two
/// snapshots and non-zero energy.
pub fn characteristics(tvir: &Tvir) -> Result<Characteristics> {
    let pdp = power_delay_profile(tvir);
    let ds = tvir.delay_step();
    let ct = coherence_time(tvir, DEFAULT_COHERENCE_THRESHOLD)?;
    let cb = coherence_bandwidth(&pdp, ds, DEFAULT_COHERENCE_THRESHOLD)?;
    let counts: Vec<usize> = tvir
        .snapshots()
        .filter_map(|row| significant_in(row, DEFAULT_SIGNIFICANT_THRESHOLD_DB).map(|it| it.count()))
        .collect();
    let num_significant_taps =
        if counts.is_empty() { 0.0 } else { counts.iter().sum::<usize>() as f64 / counts.len() as f64 };
    Ok(Characteristics {
        mean_delay: mean_delay(&pdp, ds)?,
        delay_spread_10db: delay_spread(&pdp, ds, DEFAULT_SPREAD_THRESHOLD_DB)?,
        rms_delay_spread: rms_delay_spread(&pdp, ds)?,
        doppler_spread_10db: doppler_spread(tvir, DEFAULT_SPREAD_THRESHOLD_DB)?,
        coherence_time: ct.value,
        coherence_bandwidth: cb.value,
        num_significant_taps,
        total_gain_db: 10.0 * pdp.iter().sum::<f64>().log10(),
        coherence_time_saturated: ct.saturated,
        coherence_bandwidth_saturated: cb.saturated,
    })
}

/// Sorted samples; evaluation is right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Quantile with linear interpolation between order statistics
    /// (position `p (n - 1)`).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let w = pos - lo as f64;
        self.sorted[lo] * (1.0 - w) + self.sorted[hi] * w
    }

    /// `(x, F(x))` at each distinct sample value.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = (i + 1) as f64 / n,
                _ => out.push((x, (i + 1) as f64 / n)),
            }
        }
        out
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(invalid("empty sample set"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

/// Counts in `n_bins` equal bins over `[lo, hi)`; each bin is half-open and
/// values outside the range are ignored.
pub fn histogram(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = range;
    if values.is_empty() {
        return Err(invalid("empty sample set"));
    }
    if n_bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bad histogram layout: {n_bins} bins over [{lo}, {hi})")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0; n_bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / width) as usize).min(n_bins - 1)] += 1;
        }
    }
    Ok(counts)
}

/// Lower edge of every bin followed by `hi`.
pub fn bin_edges(n_bins: usize, range: (f64, f64)) -> Vec<f64> {
    let width = (range.1 - range.0) / n_bins as f64;
    (0..=n_bins).map(|k| if k == n_bins { range.1 } else { range.0 + k as f64 * width }).collect()
}
