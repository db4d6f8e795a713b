//! Simulated corpora: environment draw, nominal arrivals, time evolution,
//! one UATV record per draw.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uasim_core::rng::stream_rng;
use uasim_core::uatv::{self, UatvRecord};
use uasim_core::{normalize_tvir, Tvir};

use crate::dynamics::{evolve_tvir, DynamicsConfig, TvirDims};
use crate::environment::EnvironmentRanges;
use crate::error::{ChannelError, Result};
use crate::paths::nominal_cir;

/// Corpus generation settings, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub count: usize,
    /// Each record holds `2 * snapshots` consecutive CIRs: condition half
    /// then target half.
    pub paired: bool,
    pub snapshots: usize,
    pub taps: usize,
    /// Snapshot rate, Hz.
    pub time_rate: f64,
    /// Delay-axis sampling rate, Hz.
    pub delay_rate: f64,
    pub anchor_index: usize,
    pub max_bounces: u32,
    /// Excess-delay window for arrivals, s. Defaults to what fits after the
    /// anchor.
    pub max_delay: Option<f64>,
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    pub environment: EnvironmentRanges,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            count: 100,
            paired: false,
            snapshots: 20,
            taps: 250,
            time_rate: 20.0,
            delay_rate: 12_000.0,
            anchor_index: uasim_core::DEFAULT_ANCHOR_INDEX,
            max_bounces: 10,
            max_delay: None,
            seed: 0,
            dynamics: DynamicsConfig::default(),
            environment: EnvironmentRanges::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ChannelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ChannelError::Config(m));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if self.snapshots == 0 || self.taps == 0 || self.anchor_index >= self.taps {
            return bad(format!(
                "need snapshots >= 1 and anchor < taps (got {}, {}, {})",
                self.snapshots, self.taps, self.anchor_index
            ));
        }
        if !(self.time_rate > 0.0) || !(self.delay_rate > 0.0) {
            return bad("sampling rates must be positive".into());
        }
        if let Some(m) = self.max_delay {
            if !(m > 0.0) {
                return bad(format!("max_delay must be positive, got {m}"));
            }
        }
        self.dynamics.validate().map_err(|e| ChannelError::Config(e.to_string()))?;
        self.environment.validate()
    }

    /// Dimensions of each generated record.
    pub fn record_dims(&self) -> TvirDims {
        TvirDims {
            snapshots: if self.paired { 2 * self.snapshots } else { self.snapshots },
            taps: self.taps,
            time_step: 1.0 / self.time_rate,
            delay_step: 1.0 / self.delay_rate,
            anchor_index: self.anchor_index,
        }
    }

    fn window(&self) -> f64 {
        self.max_delay.unwrap_or_else(|| self.record_dims().max_excess_delay())
    }
}

/// Generates record `index` of the corpus. Each record draws from its own
/// stream `(seed, index)`, so records do not depend on each other.
pub fn generate_record(cfg: &GeneratorConfig, index: usize) -> Result<UatvRecord> {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let env = cfg.environment.sample(&mut rng)?;
    let nominal = nominal_cir(&env, cfg.window(), cfg.max_bounces)?;
    let evolved = evolve_tvir(&nominal, &cfg.record_dims(), &cfg.dynamics, &mut rng)?;
    let n = evolved.normalization;
    let metadata = json!({
        "source": "simulated",
        "seed": cfg.seed,
        "index": index,
        "paired": cfg.paired,
        "environment": env,
        "num_paths": nominal.len(),
        "dropped_arrivals": evolved.dropped,
        "dynamics": cfg.dynamics,
        "normalization": {"scale": n.scale, "shift": n.shift, "anchor_index": n.anchor_index},
    });
    Ok(UatvRecord::new(evolved.tvir, metadata))
}

/// Generates the whole corpus in record order.
pub fn generate_records(cfg: &GeneratorConfig) -> Result<Vec<UatvRecord>> {
    cfg.validate()?;
    (0..cfg.count).into_par_iter().map(|i| generate_record(cfg, i)).collect()
}

/// Generates the corpus and writes it as a UATV file.
pub fn generate_dataset(cfg: &GeneratorConfig, path: &Path) -> Result<usize> {
    let records = generate_records(cfg)?;
    uatv::write_file(path, &records)?;
    Ok(records.len())
}

/// Splits a paired record into (condition, target) halves, each straightened
/// on its own first CIR.
pub fn split_pair(tvir: &Tvir, anchor_index: usize) -> Result<(Tvir, Tvir)> {
    let t = tvir.num_snapshots();
    if t < 2 || t % 2 != 0 {
        return Err(ChannelError::InvalidInput(format!("paired TVIR needs an even snapshot count, got {t}")));
    }
    let half = t / 2;
    let (cond, _) = normalize_tvir(&tvir.slice_time(0, half)?, anchor_index)?;
    let (target, _) = normalize_tvir(&tvir.slice_time(half, half)?, anchor_index)?;
    Ok((cond, target))
}
