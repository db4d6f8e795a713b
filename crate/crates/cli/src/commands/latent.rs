use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use uasim_core::uatv::UatvRecord;
use uasim_models::autoencoder::Autoencoder;

use super::{features, halves, input, load_autoencoder, load_diffusion, read_records, tag, write_json, write_records};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Latent file written by `encode` and read by `decode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFile {
    pub latent_dim: usize,
    /// `(record, half)` of each latent; `half` is 0 for unpaired records.
    pub sources: Vec<(usize, usize)>,
    pub latents: Vec<Vec<f64>>,
}

pub(super) fn encode(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let ae = load_autoencoder(cfg)?;
    let mut tvirs = Vec::new();
    let mut sources = Vec::new();
    for (i, r) in read_records(input(cfg))?.iter().enumerate() {
        for (h, x) in halves(r, ae.config().snapshots, cfg.sim.anchor_index)?.into_iter().enumerate() {
            tvirs.push(x);
            sources.push((i, h));
        }
    }
    let latents = ae.encode_batch(&features(&tvirs, ae.config().taps)?)?;
    let file = LatentFile { latent_dim: ae.config().latent_dim, sources, latents };
    Ok(vec![write_json(out, "latents.json", &serde_json::to_value(&file)?)?])
}

fn decode_records(ae: &Autoencoder, cfg: &ExperimentConfig, latents: &[Vec<f64>], meta: impl Fn(usize) -> serde_json::Value) -> Result<Vec<UatvRecord>> {
    let (dt, ds) = (1.0 / cfg.sim.time_rate, 1.0 / cfg.sim.delay_rate);
    ae.decode_batch(latents)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (tvir, degenerate) = f.to_tvir(dt, ds)?;
            let mut m = meta(i);
            m["degenerate_taps"] = json!(degenerate);
            Ok(UatvRecord::new(tvir, m))
        })
        .collect()
}

pub(super) fn decode(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let ae = load_autoencoder(cfg)?;
    let path = input(cfg);
    let text = std::fs::read_to_string(path)?;
    let file: LatentFile =
        serde_json::from_str(&text).map_err(|e| CliError::Run(format!("{}: not a latent file: {e}", path.display())))?;
    if file.latent_dim != ae.config().latent_dim {
        return Err(CliError::Run(format!("latents have {} values; the autoencoder takes {}", file.latent_dim, ae.config().latent_dim)));
    }
    let recs = decode_records(&ae, cfg, &file.latents, |i| tag(json!({"source": "decoded", "latent_index": i})))?;
    Ok(vec![write_records(out, "decoded.uatv", &recs)?])
}

/// Conditional generation: each condition TVIR (the first half of a paired
/// record) is encoded, and `generate.count` outputs cycle through them.
pub(super) fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let ae = load_autoencoder(cfg)?;
    let model = load_diffusion(cfg)?;
    if model.config().latent_dim != ae.config().latent_dim {
        return Err(CliError::Run("diffusion and autoencoder checkpoints disagree on the latent size".into()));
    }
    let conds: Vec<_> = read_records(input(cfg))?
        .iter()
        .map(|r| Ok(halves(r, ae.config().snapshots, cfg.sim.anchor_index)?.swap_remove(0)))
        .collect::<Result<_>>()?;
    let zc = ae.encode_batch(&features(&conds, ae.config().taps)?)?;
    let count = cfg.generate.count.unwrap_or(zc.len());
    let which: Vec<usize> = (0..count).map(|k| k % zc.len()).collect();
    let z = model.generate_batch(&which.iter().map(|&c| zc[c].clone()).collect::<Vec<_>>(), cfg.seed)?;
    let recs = decode_records(&ae, cfg, &z, |i| tag(json!({"source": "generated", "condition_index": which[i], "seed": cfg.seed})))?;
    Ok(vec![write_records(out, "generated.uatv", &recs)?])
}
