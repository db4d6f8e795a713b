//! Experiment configuration: one TOML file per run, with `--set key=value`
//! overrides applied to the parsed table before it is typed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use uasim_channel::GeneratorConfig;
use uasim_eval::{EmdConfig, NlmsConfig, ReplayConfig};
use uasim_models::autoencoder::{AeConfig, AeTrainConfig};
use uasim_models::diffusion::{DiffTrainConfig, NoiseSchedule, ScheduleKind};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives every random choice of the run; section seeds are overwritten
    /// with it.
    pub seed: u64,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub sim: GeneratorConfig,
    #[serde(default)]
    pub autoencoder: AeSection,
    #[serde(default)]
    pub diffusion: DiffSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub comms: CommsSection,
    #[serde(default)]
    pub replay: ReplaySection,
    #[serde(default)]
    pub nlms: NlmsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Main input: a UATV file, or a latent JSON file for `decode`.
    pub input: Option<PathBuf>,
    /// Optional separate validation set for training commands.
    pub validation: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub ae_checkpoint: Option<PathBuf>,
    pub diffusion_checkpoint: Option<PathBuf>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self { input: None, validation: None, output_dir: PathBuf::from("out"), ae_checkpoint: None, diffusion_checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeSection {
    pub model: AeConfig,
    /// Named learning-rate/patience preset; keys under `train` override it.
    pub preset: Option<String>,
    pub train: AeTrainConfig,
    /// Share of the input held out for validation when no separate file
    /// is given.
    pub validation_fraction: f64,
}

impl Default for AeSection {
    fn default() -> Self {
        Self { model: AeConfig::default(), preset: None, train: AeTrainConfig::default(), validation_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { kind: ScheduleKind::Linear, steps: 100, beta_min: 1e-4, beta_max: 1e-2 }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match self.kind {
            ScheduleKind::Linear => NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max),
            ScheduleKind::Sigmoid => NoiseSchedule::sigmoid(self.steps, self.beta_min, self.beta_max),
            ScheduleKind::Custom => return Err(config_err("custom schedules cannot be configured from a file")),
        }
        .map_err(|e| config_err(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffSection {
    /// Hidden width of the denoiser; the latent size comes from the
    /// autoencoder checkpoint.
    pub width: usize,
    pub schedule: ScheduleSection,
    pub preset: Option<String>,
    pub train: DiffTrainConfig,
    pub validation_fraction: f64,
}

impl Default for DiffSection {
    fn default() -> Self {
        Self {
            width: 2048,
            schedule: ScheduleSection::default(),
            preset: None,
            train: DiffTrainConfig::default(),
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    /// Number of TVIRs to generate, cycling through the conditions. Defaults
    /// to one per condition.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub histogram_bins: usize,
    /// Threshold for the pooled significant-tap export, dB below the
    /// strongest tap of each snapshot.
    pub significant_threshold_db: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { histogram_bins: 50, significant_threshold_db: uasim_eval::metrics::DEFAULT_SIGNIFICANT_THRESHOLD_DB }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsSection {
    /// Preset scheme names ("1" to "32", "NOF1").
    pub schemes: Vec<String>,
    /// Extra schemes in the preset TOML layout; all of them are evaluated.
    pub scheme_file: Option<PathBuf>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
}

impl Default for CommsSection {
    fn default() -> Self {
        Self {
            schemes: vec!["NOF1".into()],
            scheme_file: None,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    /// Snapshots per output TVIR of the stochastic replay.
    pub target_snapshots: usize,
    pub min_duration: f64,
    pub emd: EmdConfig,
}

impl Default for ReplaySection {
    fn default() -> Self {
        let r = ReplayConfig::default();
        Self { target_snapshots: 20, min_duration: r.min_duration, emd: r.emd }
    }
}

impl ReplaySection {
    pub fn replay_config(&self) -> ReplayConfig {
        ReplayConfig { min_duration: self.min_duration, emd: self.emd.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlmsSection {
    /// m-sequence order of the periodic probe.
    pub order: u32,
    pub snr_db: f64,
    pub filter: NlmsConfig,
}

impl Default for NlmsSection {
    fn default() -> Self {
        Self { order: 13, snr_db: 30.0, filter: NlmsConfig::default() }
    }
}

/// Parses the value side of `--set key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| config_err(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| config_err(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Lays the keys of `over` on top of `base`, recursing into tables.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Replaces `section.train` with the named preset overlaid by whatever the
/// file set explicitly.
fn expand_preset<T: Serialize>(table: &mut Table, section: &str, preset: impl Fn(&str) -> Option<T>) -> Result<()> {
    let Some(Value::Table(sec)) = table.get_mut(section) else { return Ok(()) };
    let Some(name) = sec.get("preset") else { return Ok(()) };
    let name = name.as_str().ok_or_else(|| config_err(format!("{section}.preset must be a string")))?;
    let base = preset(name).ok_or_else(|| config_err(format!("unknown {section} preset {name:?}")))?;
    let mut merged = Table::try_from(base).map_err(|e| config_err(e.to_string()))?;
    if let Some(Value::Table(explicit)) = sec.remove("train") {
        merge(&mut merged, explicit);
    }
    sec.insert("train".into(), Value::Table(merged));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_table(mut table: Table, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if !table.contains_key("seed") {
            return Err(config_err("seed is mandatory"));
        }
        expand_preset(&mut table, "autoencoder", |n| AeTrainConfig::preset(n).ok())?;
        expand_preset(&mut table, "diffusion", |n| DiffTrainConfig::preset(n).ok())?;
        let mut cfg: Self = Value::Table(table).try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.sim.seed = cfg.seed;
        cfg.autoencoder.train.seed = cfg.seed;
        cfg.diffusion.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        Self::from_table(table, overrides)
    }

    fn validate(&self) -> Result<()> {
        self.sim.validate().map_err(|e| config_err(e.to_string()))?;
        for (name, f) in [("autoencoder", self.autoencoder.validation_fraction), ("diffusion", self.diffusion.validation_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(config_err(format!("{name}.validation_fraction must lie in (0, 1), got {f}")));
            }
        }
        self.diffusion.schedule.build()?;
        if self.diffusion.width == 0 {
            return Err(config_err("diffusion.width must be positive"));
        }
        if self.metrics.histogram_bins == 0 {
            return Err(config_err("metrics.histogram_bins must be positive"));
        }
        if self.comms.trials == 0 || self.comms.snr_db.is_empty() {
            return Err(config_err("comms needs at least one trial and one SNR"));
        }
        if self.replay.target_snapshots == 0 {
            return Err(config_err("replay.target_snapshots must be positive"));
        }
        if self.generate.count == Some(0) {
            return Err(config_err("generate.count must be positive"));
        }
        Ok(())
    }

    /// Stable JSON rendering of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration always serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, overrides: &[&str]) -> Result<ExperimentConfig> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        ExperimentConfig::from_table(toml::from_str(text).unwrap(), &o)
    }

    #[test]
    fn seed_is_mandatory_and_propagates() {
        assert!(load("", &[]).is_err());
        let c = load("seed = 7", &[]).unwrap();
        assert_eq!((c.sim.seed, c.autoencoder.train.seed, c.diffusion.train.seed), (7, 7, 7));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = load("seed = 1\n[sim]\ncount = 4", &["sim.count=9", "io.output_dir=runs/a", "comms.snr_db=[1.0, 2.0]"]).unwrap();
        assert_eq!(c.sim.count, 9);
        assert_eq!(c.io.output_dir, PathBuf::from("runs/a"));
        assert_eq!(c.comms.snr_db, vec![1.0, 2.0]);
        assert!(load("seed = 1", &["nonsense"]).is_err());
    }

    #[test]
    fn presets_yield_to_explicit_keys() {
        let c = load("seed = 1\n[autoencoder]\npreset = \"nov2024\"\n[autoencoder.train]\npatience = 2", &[]).unwrap();
        assert_eq!((c.autoencoder.train.learning_rate, c.autoencoder.train.patience), (1e-2, 2));
        assert!(load("seed = 1\n[autoencoder]\npreset = \"nope\"", &[]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load("seed = 1\nbogus = 3", &[]).is_err());
        assert!(load("seed = 1\n[comms]\nsnr = [1.0]", &[]).is_err());
        assert!(load("seed = 1", &["diffusion.validation_fraction=1.5"]).is_err());
    }

    #[test]
    fn canonical_json_is_stable() {
        let a = load("seed = 3", &[]).unwrap();
        assert_eq!(a.canonical_json(), load("seed = 3", &[]).unwrap().canonical_json());
    }
}
