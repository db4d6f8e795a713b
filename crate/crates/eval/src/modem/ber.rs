//! Bit error counting and BER tables over TVIR sets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uasim_core::{rng::stream_rng, Tvir};

use super::link::apply_channel;
use super::ofdm::{ofdm_demodulate, ofdm_modulate};
use super::scheme::OfdmScheme;
use crate::error::{invalid, Result};
use crate::metrics::{empirical_cdf, power_delay_profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BitErrors {
    pub bit_errors: u64,
    pub bits_total: u64,
}

impl BitErrors {
    pub fn ber(&self) -> f64 {
        if self.bits_total == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_total as f64
        }
    }

    pub fn merge(self, o: BitErrors) -> BitErrors {
        BitErrors { bit_errors: self.bit_errors + o.bit_errors, bits_total: self.bits_total + o.bits_total }
    }
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<BitErrors> {
    if tx.len() != rx.len() {
        return Err(invalid(format!("bit sequences differ in length: {} vs {}", tx.len(), rx.len())));
    }
    let bit_errors = tx.iter().zip(rx).filter(|(a, b)| a != b).count() as u64;
    Ok(BitErrors { bit_errors, bits_total: tx.len() as u64 })
}

/// Errors accumulated over all trials for one channel at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    pub scheme: String,
    pub snr_db: f64,
    pub channel: usize,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
}

/// One line of the BER table: statistics across channels at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub scheme: String,
    pub snr_db: f64,
    pub mean_ber: f64,
    pub p75_ber: f64,
    pub n_channels: usize,
    pub bits_total: u64,
}

pub const BER_HEADER: &str = "scheme,snr_db,mean_ber,p75_ber,n_channels,bits_total";

impl BerRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scheme, self.snr_db, self.mean_ber, self.p75_ber, self.n_channels, self.bits_total
        )
    }
}

/// Whole blocks that fit in the TVIR after the receiver locks onto the
/// strongest tap.
fn link_budget(tvir: &Tvir, scheme: &OfdmScheme) -> (usize, usize) {
    let pdp = power_delay_profile(tvir);
    let sync = pdp.iter().enumerate().fold((0, f64::MIN), |a, (j, &p)| if p > a.1 { (j, p) } else { a }).0;
    let samples = (tvir.duration() / tvir.delay_step() + 1e-6).floor() as usize;
    (samples.saturating_sub(sync) / scheme.block_length(), sync)
}

/// One transmission: random payload, modulation, channel, demodulation.
/// Timing is ideal: the receive window starts at the strongest PDP tap.
pub fn simulate_link<R: Rng + ?Sized>(tvir: &Tvir, scheme: &OfdmScheme, snr_db: f64, rng: &mut R) -> Result<BitErrors> {
    let (blocks, sync) = link_budget(tvir, scheme);
    if blocks == 0 {
        return Err(invalid(format!(
            "a {} s TVIR cannot hold one {}-sample block of scheme {}",
            tvir.duration(),
            scheme.block_length(),
            scheme.name
        )));
    }
    let bits: Vec<u8> = (0..blocks * scheme.bits_per_block).map(|_| rng.random_range(0..2u8)).collect();
    let mut tx = ofdm_modulate(&bits, scheme)?;
    let frame = tx.len();
    tx.resize(frame + sync, Default::default());
    let rx = apply_channel(&tx, tvir, snr_db, rng)?;
    let decoded = ofdm_demodulate(&rx[sync..sync + frame], scheme)?;
    ber(&bits, &decoded)
}

/// Runs `trials` transmissions per `(channel, snr)` pair. Each triple draws
/// from its own stream of `seed`, so results do not depend on thread count.
pub fn evaluate_channels(
    tvirs: &[Tvir],
    scheme: &OfdmScheme,
    snr_db: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<BerResult>> {
    if tvirs.is_empty() || snr_db.is_empty() || trials == 0 {
        return Err(invalid("need at least one channel, one SNR and one trial"));
    }
    scheme.validate()?;
    let jobs: Vec<(usize, usize)> = (0..tvirs.len()).flat_map(|c| (0..snr_db.len()).map(move |s| (c, s))).collect();
    jobs.par_iter()
        .map(|&(c, s)| {
            let mut acc = BitErrors::default();
            for k in 0..trials {
                let stream = ((c * snr_db.len() + s) * trials + k) as u64;
                let mut rng = stream_rng(seed, stream);
                acc = acc.merge(simulate_link(&tvirs[c], scheme, snr_db[s], &mut rng)?);
            }
            Ok(BerResult {
                scheme: scheme.name.clone(),
                snr_db: snr_db[s],
                channel: c,
                bit_errors: acc.bit_errors,
                bits_total: acc.bits_total,
                ber: acc.ber(),
            })
        })
        .collect()
}

/// Mean and 75th percentile of the per-channel BER at each SNR.
pub fn summarize(results: &[BerResult]) -> Result<Vec<BerRow>> {
    let mut snrs: Vec<f64> = Vec::new();
    for r in results {
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    snrs.into_iter()
        .map(|snr| {
            let at: Vec<&BerResult> = results.iter().filter(|r| r.snr_db == snr).collect();
            let bers: Vec<f64> = at.iter().map(|r| r.ber).collect();
            let cdf = empirical_cdf(&bers)?;
            Ok(BerRow {
                scheme: at[0].scheme.clone(),
                snr_db: snr,
                mean_ber: bers.iter().sum::<f64>() / bers.len() as f64,
                p75_ber: cdf.quantile(0.75),
                n_channels: at.len(),
                bits_total: at.iter().map(|r| r.bits_total).sum(),
            })
        })
        .collect()
}

/// [`evaluate_channels`] followed by [`summarize`].
pub fn evaluate(tvirs: &[Tvir], scheme: &OfdmScheme, snr_db: &[f64], trials: usize, seed: u64) -> Result<Vec<BerRow>> {
    summarize(&evaluate_channels(tvirs, scheme, snr_db, trials, seed)?)
}
