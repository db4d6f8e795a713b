//! Evaluation tools for TVIR corpora.
//!
//! * [`metrics`]: power delay profile, spreads, coherence measures,
//!   significant-tap statistics, empirical CDFs and histograms.
//! * [`modem`]: an OFDM link over a time-varying channel with AWGN, the
//!   scheme presets and BER tables.
//! * [`probe`]: m-sequence probes and NLMS channel tracking.
//! * [`emd`] and [`replay`]: empirical mode decomposition and the direct and
//!   stochastic replay baselines.

pub mod emd;
mod error;
pub mod metrics;
pub mod modem;
pub mod probe;
pub mod replay;

pub use emd::{emd, EmdConfig, EmdResult};
pub use error::{EvalError, Result};
pub use metrics::{
    characteristics, coherence_bandwidth, coherence_time, delay_spread, doppler_spread, empirical_cdf, histogram,
    mean_delay, power_delay_profile, rms_delay_spread, significant_taps, Characteristics, Coherence, EmpiricalCdf,
};
pub use modem::{
    apply_channel, ber, evaluate, ofdm_demodulate, ofdm_modulate, BerResult, BerRow, BitErrors, Modulation, OfdmScheme,
};
pub use probe::{msequence, nlms_estimate, NlmsConfig, NlmsEstimate};
pub use replay::{direct_replay, fit_ar1, stochastic_replay, trend_split, ReplayConfig, TrendSplit};
