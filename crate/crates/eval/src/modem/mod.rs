//! OFDM link simulation over time-varying channels.
//!
//! Baseband at the TVIR tap rate (12 kHz by default); no carrier
//! conversion, coding or synchronisation impairments.

mod ber;
mod link;
mod ofdm;
mod scheme;

pub use ber::{ber, evaluate, evaluate_channels, simulate_link, summarize, BerResult, BerRow, BitErrors, BER_HEADER};
pub use link::{add_awgn, apply_channel, convolve_time_varying, mean_power, snr_for_ebn0};
pub use ofdm::{ofdm_demodulate, ofdm_demodulate_with, ofdm_modulate, Equalizer};
pub use scheme::{CarrierLayout, Modulation, OfdmScheme};
