//! Block modulator and pilot-aided demodulator.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::scheme::{CarrierLayout, OfdmScheme};
use crate::error::{invalid, Result};

/// Channel knowledge used by the one-tap equaliser.
#[derive(Debug, Clone, PartialEq)]
pub enum Equalizer {
    /// Least squares on the pilots, linearly interpolated across data carriers.
    Pilots,
    /// A known response for every FFT bin, same for all blocks.
    Known(Vec<Complex64>),
}

fn hamming(len: usize) -> Vec<f64> {
    if len < 2 {
        return vec![1.0; len];
    }
    let d = (len - 1) as f64;
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / d).cos()).collect()
}

/// Maps `bits` block by block onto the carrier layout, applies a unitary
/// inverse DFT, prepends the cyclic prefix and, for windowed schemes,
/// shapes each whole block with a Hamming window.
pub fn ofdm_modulate(bits: &[u8], scheme: &OfdmScheme) -> Result<Vec<Complex64>> {
    let layout = scheme.layout()?;
    let bpb = scheme.bits_per_block;
    if bits.is_empty() || bits.len() % bpb != 0 {
        return Err(invalid(format!("{} bits are not a whole number of {bpb}-bit blocks", bits.len())));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid("bits must be 0 or 1"));
    }
    let (n, cp) = (scheme.num_carriers, scheme.cp_length);
    let bps = scheme.modulation.bits_per_symbol();
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let window = scheme.windowed.then(|| hamming(n + cp));
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = Vec::with_capacity(bits.len() / bpb * (n + cp));
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for block in bits.chunks(bpb) {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (&slot, &p) in layout.pilot_slots.iter().zip(&layout.pilots) {
            x[layout.bins[slot]] = p;
        }
        for (&slot, sym) in layout.data_slots.iter().zip(block.chunks(bps)) {
            x[layout.bins[slot]] = scheme.modulation.map(sym);
        }
        ifft.process(&mut x);
        let start = out.len();
        out.extend(x[n - cp..].iter().map(|v| v * scale));
        out.extend(x.iter().map(|v| v * scale));
        if let Some(w) = &window {
            out[start..].iter_mut().zip(w).for_each(|(v, w)| *v *= w);
        }
    }
    Ok(out)
}

fn pilot_response(y: &[Complex64], layout: &CarrierLayout) -> Vec<Complex64> {
    let est: Vec<Complex64> =
        layout.pilot_slots.iter().zip(&layout.pilots).map(|(&s, &p)| y[layout.bins[s]] / p).collect();
    // per used slot; pilots bracket every data slot
    let mut h = vec![Complex64::new(0.0, 0.0); layout.bins.len()];
    for (k, w) in layout.pilot_slots.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        for (s, hs) in h.iter_mut().enumerate().take(b + 1).skip(a) {
            let f = (s - a) as f64 / (b - a) as f64;
            *hs = est[k] * (1.0 - f) + est[k + 1] * f;
        }
    }
    h
}

/// Strips the prefix, applies a unitary DFT, equalises each data carrier
/// with one complex tap and makes hard decisions.
pub fn ofdm_demodulate_with(received: &[Complex64], scheme: &OfdmScheme, eq: &Equalizer) -> Result<Vec<u8>> {
    let layout = scheme.layout()?;
    let (n, cp) = (scheme.num_carriers, scheme.cp_length);
    let len = n + cp;
    if received.is_empty() || received.len() % len != 0 {
        return Err(invalid(format!("{} samples are not a whole number of {len}-sample blocks", received.len())));
    }
    if let Equalizer::Known(h) = eq {
        if h.len() != n {
            return Err(invalid(format!("known response has {} bins, scheme {n}", h.len())));
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut bits = Vec::with_capacity(received.len() / len * scheme.bits_per_block);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for block in received.chunks(len) {
        y.iter_mut().zip(&block[cp..]).for_each(|(d, s)| *d = s * scale);
        fft.process(&mut y);
        let per_slot = match eq {
            Equalizer::Pilots => pilot_response(&y, &layout),
            Equalizer::Known(h) => layout.bins.iter().map(|&b| h[b]).collect(),
        };
        for &slot in &layout.data_slots {
            scheme.modulation.decide(y[layout.bins[slot]] / per_slot[slot], &mut bits);
        }
    }
    Ok(bits)
}

/// [`ofdm_demodulate_with`] using pilot-based estimation.
pub fn ofdm_demodulate(received: &[Complex64], scheme: &OfdmScheme) -> Result<Vec<u8>> {
    ofdm_demodulate_with(received, scheme, &Equalizer::Pilots)
}
