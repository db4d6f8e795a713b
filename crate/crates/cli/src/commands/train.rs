use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde_json::json;
use uasim_core::FeatureSeq;
use uasim_models::autoencoder::{amplitude_nmse_db, fine_tune_autoencoder, train_autoencoder, Autoencoder};
use uasim_models::diffusion::{fine_tune_generative, train_diffusion, ConditionPair, DenoiserConfig, DiffusionModel};

use super::{input, load_autoencoder, load_diffusion, model_items, read_records, split, write_json};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

const AE_CHECKPOINT: &str = "autoencoder.uack";
const DIFF_CHECKPOINT: &str = "diffusion.uack";

/// Training and validation items: a separate validation file when given,
/// otherwise a seeded hold-out from the input.
fn ae_sets(cfg: &ExperimentConfig, model: &Autoencoder) -> Result<(Vec<FeatureSeq>, Vec<FeatureSeq>)> {
    let anchor = cfg.sim.anchor_index;
    let items = model_items(input(cfg), model.config(), anchor)?;
    match &cfg.io.validation {
        Some(v) => Ok((items, model_items(v, model.config(), anchor)?)),
        None => split(&items, cfg.autoencoder.validation_fraction, cfg.seed),
    }
}

pub(super) fn ae_train(cfg: &ExperimentConfig, out: &Path, fine_tune: bool) -> Result<Vec<String>> {
    let mut model = if fine_tune { load_autoencoder(cfg)? } else { Autoencoder::new(cfg.autoencoder.model, cfg.seed)? };
    let (train, val) = ae_sets(cfg, &model)?;
    let log_name = if fine_tune { "ae_finetune_log.csv" } else { "ae_train_log.csv" };
    let mut log = BufWriter::new(File::create(out.join(log_name))?);
    let tc = &cfg.autoencoder.train;
    let report = if fine_tune {
        fine_tune_autoencoder(&mut model, &train, &val, tc, Some(&mut log))?
    } else {
        train_autoencoder(&mut model, &train, &val, tc, Some(&mut log))?
    };
    drop(log);
    model.save(&out.join(AE_CHECKPOINT))?;
    let nmse_train = amplitude_nmse_db(&train, &model.reconstruct_batch(&train)?)?;
    let nmse_val = amplitude_nmse_db(&val, &model.reconstruct_batch(&val)?)?;
    let summary = json!({
        "train_items": train.len(),
        "validation_items": val.len(),
        "epochs_run": report.history.len(),
        "best_epoch": report.best_epoch,
        "best_val_loss": report.best_val,
        "stopped_early": report.stopped_early,
        "timed_out": report.timed_out,
        "amplitude_nmse_db_train": nmse_train,
        "amplitude_nmse_db_validation": nmse_val,
    });
    let report_name = if fine_tune { "ae_finetune_report.json" } else { "ae_train_report.json" };
    Ok(vec![AE_CHECKPOINT.into(), log_name.into(), write_json(out, report_name, &summary)?])
}

/// (condition, target) latent pairs from the paired records of `path`.
fn latent_pairs(path: &Path, ae: &Autoencoder, anchor: usize) -> Result<Vec<ConditionPair>> {
    let records = read_records(path)?;
    let t = ae.config().snapshots;
    let mut conds = Vec::new();
    let mut targets = Vec::new();
    for r in &records {
        if r.tvir.num_snapshots() != 2 * t {
            return Err(CliError::Run(format!(
                "diffusion pre-training needs paired records of {} snapshots, got {}",
                2 * t,
                r.tvir.num_snapshots()
            )));
        }
        let (c, x) = uasim_channel::split_pair(&r.tvir, anchor)?;
        conds.push(c);
        targets.push(x);
    }
    let zc = ae.encode_batch(&super::features(&conds, ae.config().taps)?)?;
    let zt = ae.encode_batch(&super::features(&targets, ae.config().taps)?)?;
    Ok(zc.into_iter().zip(zt).map(|(cond, target)| ConditionPair { cond, target }).collect())
}

fn diff_summary(report: &uasim_models::diffusion::DiffTrainReport, n_train: usize, n_val: usize) -> serde_json::Value {
    json!({
        "train_items": n_train,
        "validation_items": n_val,
        "epochs_run": report.history.len(),
        "initial_val_loss": report.initial_val,
        "best_val_loss": report.best_val,
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
    })
}

pub(super) fn diff_train(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let ae = load_autoencoder(cfg)?;
    let anchor = cfg.sim.anchor_index;
    let pairs = latent_pairs(input(cfg), &ae, anchor)?;
    let (train, val) = match &cfg.io.validation {
        Some(v) => (pairs, latent_pairs(v, &ae, anchor)?),
        None => split(&pairs, cfg.diffusion.validation_fraction, cfg.seed)?,
    };
    let dc = DenoiserConfig { latent_dim: ae.config().latent_dim, width: cfg.diffusion.width };
    let mut model = DiffusionModel::new(dc, cfg.diffusion.schedule.build()?, cfg.seed)?;
    let log_name = "diff_train_log.csv";
    let mut log = BufWriter::new(File::create(out.join(log_name))?);
    let report = train_diffusion(&mut model, &train, &val, &cfg.diffusion.train, Some(&mut log))?;
    drop(log);
    model.save(&out.join(DIFF_CHECKPOINT))?;
    let summary = diff_summary(&report, train.len(), val.len());
    Ok(vec![DIFF_CHECKPOINT.into(), log_name.into(), write_json(out, "diff_train_report.json", &summary)?])
}

/// Generative fine-tuning on every model-sized TVIR of the input; the
/// configured schedule replaces the checkpoint's.
pub(super) fn diff_finetune(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let ae = load_autoencoder(cfg)?;
    let mut model = load_diffusion(cfg)?;
    if model.config().latent_dim != ae.config().latent_dim {
        return Err(CliError::Run(format!(
            "diffusion latent size {} does not match the autoencoder's {}",
            model.config().latent_dim,
            ae.config().latent_dim
        )));
    }
    model.set_schedule(cfg.diffusion.schedule.build()?);
    let latents = ae.encode_batch(&model_items(input(cfg), ae.config(), cfg.sim.anchor_index)?)?;
    let log_name = "diff_finetune_log.csv";
    let mut log = BufWriter::new(File::create(out.join(log_name))?);
    let report = fine_tune_generative(&mut model, &latents, &cfg.diffusion.train, Some(&mut log))?;
    drop(log);
    model.save(&out.join(DIFF_CHECKPOINT))?;
    let summary = diff_summary(&report, latents.len(), latents.len());
    Ok(vec![DIFF_CHECKPOINT.into(), log_name.into(), write_json(out, "diff_finetune_report.json", &summary)?])
}
