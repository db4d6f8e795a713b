//! One function per subcommand. Each returns the names of the files it wrote
//! inside the output directory; the caller records them in the manifest.

mod analysis;
mod latent;
mod train;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde_json::{json, Value};
use uasim_channel::split_pair;
use uasim_core::rng::stream_rng;
use uasim_core::uatv::{self, UatvRecord};
use uasim_core::{FeatureSeq, Tvir};
use uasim_models::autoencoder::Autoencoder;
use uasim_models::diffusion::DiffusionModel;

use crate::config::ExperimentConfig;
use crate::error::{config_err, CliError, Result};

/// Stream of the train/validation shuffles.
const SPLIT_STREAM: u64 = 0x5350_4c49;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimGen,
    AeTrain,
    AeFinetune,
    DiffTrain,
    DiffFinetune,
    Encode,
    Decode,
    Generate,
    Metrics,
    Ber,
    Replay,
    Nlms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimGen => "sim-gen",
            Command::AeTrain => "ae-train",
            Command::AeFinetune => "ae-finetune",
            Command::DiffTrain => "diff-train",
            Command::DiffFinetune => "diff-finetune",
            Command::Encode => "encode",
            Command::Decode => "decode",
            Command::Generate => "generate",
            Command::Metrics => "metrics",
            Command::Ber => "ber",
            Command::Replay => "replay",
            Command::Nlms => "nlms",
        }
    }

    /// Files the command reads, besides checkpoints. Checked before any work
    /// starts.
    pub fn inputs(self, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        if self != Command::SimGen {
            out.push(cfg.io.input.clone().ok_or_else(|| config_err(format!("{} needs io.input", self.name())))?);
        }
        if matches!(self, Command::AeTrain | Command::AeFinetune | Command::DiffTrain) {
            out.extend(cfg.io.validation.clone());
        }
        if self == Command::Ber {
            out.extend(cfg.comms.scheme_file.clone());
        }
        for p in &out {
            if !p.is_file() {
                return Err(config_err(format!("input {} does not exist", p.display())));
            }
        }
        Ok(out)
    }

    fn needs_autoencoder(self) -> bool {
        matches!(
            self,
            Command::AeFinetune
                | Command::DiffTrain
                | Command::DiffFinetune
                | Command::Encode
                | Command::Decode
                | Command::Generate
        )
    }

    fn needs_diffusion(self) -> bool {
        matches!(self, Command::DiffFinetune | Command::Generate)
    }

    /// Checkpoints the command loads; a missing one is its own error.
    pub fn checkpoints(self, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let mut need = |p: &Option<PathBuf>, key: &str| -> Result<()> {
            let p = p.clone().ok_or_else(|| CliError::MissingCheckpoint(PathBuf::from(format!("<io.{key} not set>"))))?;
            if !p.is_file() {
                return Err(CliError::MissingCheckpoint(p));
            }
            out.push(p);
            Ok(())
        };
        if self.needs_autoencoder() {
            need(&cfg.io.ae_checkpoint, "ae_checkpoint")?;
        }
        if self.needs_diffusion() {
            need(&cfg.io.diffusion_checkpoint, "diffusion_checkpoint")?;
        }
        Ok(out)
    }

    pub fn execute(self, cfg: &ExperimentConfig) -> Result<Vec<String>> {
        let out = cfg.io.output_dir.as_path();
        std::fs::create_dir_all(out)?;
        match self {
            Command::SimGen => sim_gen(cfg, out),
            Command::AeTrain => train::ae_train(cfg, out, false),
            Command::AeFinetune => train::ae_train(cfg, out, true),
            Command::DiffTrain => train::diff_train(cfg, out),
            Command::DiffFinetune => train::diff_finetune(cfg, out),
            Command::Encode => latent::encode(cfg, out),
            Command::Decode => latent::decode(cfg, out),
            Command::Generate => latent::generate(cfg, out),
            Command::Metrics => analysis::metrics(cfg, out),
            Command::Ber => analysis::ber(cfg, out),
            Command::Replay => analysis::replay(cfg, out),
            Command::Nlms => analysis::nlms(cfg, out),
        }
    }
}

fn sim_gen(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let name = "dataset.uatv";
    let n = uasim_channel::generate_dataset(&cfg.sim, &out.join(name))?;
    log::info!("wrote {n} records to {}", out.join(name).display());
    Ok(vec![name.into()])
}

fn input(cfg: &ExperimentConfig) -> &Path {
    cfg.io.input.as_deref().expect("inputs are checked before execution")
}

pub(crate) fn read_records(path: &Path) -> Result<Vec<UatvRecord>> {
    let recs = uatv::read_file(path)?;
    if recs.is_empty() {
        return Err(CliError::Run(format!("{} holds no records", path.display())));
    }
    Ok(recs)
}

pub(crate) fn write_records(out: &Path, name: &str, records: &[UatvRecord]) -> Result<String> {
    uatv::write_file(&out.join(name), records)?;
    Ok(name.to_string())
}

/// Model-sized halves of a record: the record itself when it has `snapshots`
/// snapshots, or its straightened (condition, target) halves when it has
/// twice that.
pub(crate) fn halves(rec: &UatvRecord, snapshots: usize, anchor: usize) -> Result<Vec<Tvir>> {
    let t = rec.tvir.num_snapshots();
    if t == snapshots {
        Ok(vec![rec.tvir.clone()])
    } else if t == 2 * snapshots {
        let (c, x) = split_pair(&rec.tvir, anchor)?;
        Ok(vec![c, x])
    } else {
        Err(CliError::Run(format!("record has {t} snapshots; the model takes {snapshots} (or {} when paired)", 2 * snapshots)))
    }
}

pub(crate) fn features(tvirs: &[Tvir], taps: usize) -> Result<Vec<FeatureSeq>> {
    tvirs
        .iter()
        .map(|x| {
            if x.num_taps() != taps {
                return Err(CliError::Run(format!("TVIR has {} taps; the model takes {taps}", x.num_taps())));
            }
            Ok(FeatureSeq::from_tvir(x)?)
        })
        .collect()
}

/// Every model-sized TVIR in the file, paired records contributing both halves.
pub(crate) fn model_items(path: &Path, ae: &uasim_models::autoencoder::AeConfig, anchor: usize) -> Result<Vec<FeatureSeq>> {
    let mut tvirs = Vec::new();
    for r in read_records(path)? {
        tvirs.extend(halves(&r, ae.snapshots, anchor)?);
    }
    features(&tvirs, ae.taps)
}

/// Seeded shuffle of `items` split into (train, validation).
pub(crate) fn split<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let n = items.len();
    if n < 2 {
        return Err(CliError::Run("need at least two items to hold out a validation set".into()));
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&idx[n_val..]), pick(&idx[..n_val])))
}

pub(crate) fn load_autoencoder(cfg: &ExperimentConfig) -> Result<Autoencoder> {
    let p = cfg.io.ae_checkpoint.as_ref().expect("checkpoints are checked before execution");
    Ok(Autoencoder::load(p)?)
}

pub(crate) fn load_diffusion(cfg: &ExperimentConfig) -> Result<DiffusionModel> {
    let p = cfg.io.diffusion_checkpoint.as_ref().expect("checkpoints are checked before execution");
    Ok(DiffusionModel::load(p)?)
}

pub(crate) fn write_json(out: &Path, name: &str, value: &Value) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(out.join(name), text)?;
    Ok(name.to_string())
}

pub(crate) fn with_tag(meta: &Value, extra: Value) -> Value {
    let mut m = match meta {
        Value::Object(o) => o.clone(),
        _ => Default::default(),
    };
    if let Value::Object(e) = extra {
        m.extend(e);
    }
    Value::Object(m)
}

pub(crate) fn tag(extra: Value) -> Value {
    with_tag(&json!({}), extra)
}
