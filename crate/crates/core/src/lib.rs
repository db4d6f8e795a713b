//! Core channel data types for time-varying underwater acoustic channels.
//!
//! A [`Tvir`] holds `T` channel impulse responses (snapshots) of `D` complex
//! delay taps each. Everything else in the workspace consumes or produces
//! these: the simulator writes them, the autoencoder reads their
//! [`FeatureSeq`] form, and the evaluation code measures them.

mod error;
pub mod features;
pub mod normalize;
pub mod resample;
pub mod rng;
mod tvir;
pub mod uatv;

pub use error::{CoreError, Result};
pub use features::{defeaturize, featurize, Defeaturized, FeatureSeq};
pub use normalize::{denormalize_tvir, normalize_tvir, NormalizationRecord, DEFAULT_ANCHOR_INDEX};
pub use resample::resample_time;
pub use tvir::{Tvir, DEFAULT_DELAY_STEP, DEFAULT_TIME_STEP};

pub use num_complex::Complex64;

/// Compression ratio of the latent code relative to the complex TVIR
/// (real and imaginary parts counted separately).
pub fn latent_compression_ratio(snapshots: usize, taps: usize, latent_dim: usize) -> f64 {
    (snapshots * taps * 2) as f64 / latent_dim as f64
}

/// Overall compression ratio once the time-axis downsampling from the
/// recording rate to the snapshot rate is included.
///
/// The latent factor is rounded to an integer before scaling, which is how
/// the 46,800x headline figure is obtained from 600 x 78.
pub fn effective_compression_ratio(
    recording_rate_hz: f64,
    snapshot_rate_hz: f64,
    snapshots: usize,
    taps: usize,
    latent_dim: usize,
) -> f64 {
    let latent = latent_compression_ratio(snapshots, taps, latent_dim).round();
    (recording_rate_hz / snapshot_rate_hz) * latent
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_ratios() {
        assert_eq!(latent_compression_ratio(20, 250, 128), 78.125);
        assert_eq!(latent_compression_ratio(20, 250, 128).round(), 78.0);
        assert_eq!(effective_compression_ratio(12_000.0, 20.0, 20, 250, 128), 46_800.0);
    }
}
