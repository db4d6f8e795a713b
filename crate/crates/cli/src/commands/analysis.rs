use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use uasim_core::rng::stream_rng;
use uasim_core::uatv::UatvRecord;
use uasim_core::{Complex64, Tvir};
use uasim_eval::metrics::{bin_edges, significant_taps, CHARACTERISTICS_HEADER};
use uasim_eval::modem::{apply_channel, evaluate_channels, summarize, BER_HEADER};
use uasim_eval::probe::nmse_db;
use uasim_eval::{characteristics, direct_replay, empirical_cdf, histogram, msequence, nlms_estimate, stochastic_replay, OfdmScheme};

use super::{input, read_records, with_tag, write_records};
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};

/// Numeric characteristics exported as distributions, in `values()` order.
const DISTRIBUTIONS: [&str; 8] = [
    "mean_delay_s",
    "delay_spread_10db_s",
    "rms_delay_spread_s",
    "doppler_spread_10db_hz",
    "coherence_time_s",
    "coherence_bandwidth_hz",
    "num_significant_taps",
    "total_gain_db",
];

fn write_text(out: &Path, name: &str, text: &str) -> Result<String> {
    std::fs::write(out.join(name), text)?;
    Ok(name.to_string())
}

/// Histogram over the data range as `bin_center,count`.
fn histogram_csv(values: &[f64], bins: usize) -> Result<String> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi + (hi - lo) * 1e-9) } else { (lo - 0.5, lo + 0.5) };
    let counts = histogram(values, bins, (lo, hi))?;
    let edges = bin_edges(bins, (lo, hi));
    let mut s = String::from("bin_center,count\n");
    for (k, c) in counts.iter().enumerate() {
        writeln!(s, "{},{c}", 0.5 * (edges[k] + edges[k + 1])).unwrap();
    }
    Ok(s)
}

fn cdf_csv(values: &[f64]) -> Result<String> {
    let mut s = String::from("value,cdf\n");
    for (x, p) in empirical_cdf(values)?.points() {
        writeln!(s, "{x},{p}").unwrap();
    }
    Ok(s)
}

/// Comment line naming where the records came from, so simulated stand-ins
/// are never mistaken for measurements.
fn provenance_line(records: &[UatvRecord], path: &Path) -> String {
    let mut sources: Vec<String> =
        records.iter().map(|r| r.metadata.get("source").and_then(|v| v.as_str()).unwrap_or("unknown").to_string()).collect();
    sources.sort();
    sources.dedup();
    let mut line = format!("# {} TVIRs from {}; sources: {}", records.len(), path.display(), sources.join("/"));
    if sources.iter().all(|s| s != "measured") {
        line.push_str("; simulated or generated stand-in set, not sea-trial measurements");
    }
    line
}

pub(super) fn metrics(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let path = input(cfg);
    let records = read_records(path)?;
    let chars = records.par_iter().map(|r| characteristics(&r.tvir)).collect::<uasim_eval::Result<Vec<_>>>()?;
    let mut files = Vec::new();

    let mut table = provenance_line(&records, path);
    writeln!(table, "\nindex,{CHARACTERISTICS_HEADER}").unwrap();
    for (i, c) in chars.iter().enumerate() {
        writeln!(table, "{i},{}", c.csv_row()).unwrap();
    }
    files.push(write_text(out, "characteristics.csv", &table)?);

    let bins = cfg.metrics.histogram_bins;
    let mut quant = String::from("metric,min,p25,median,p75,max,mean\n");
    for (k, name) in DISTRIBUTIONS.iter().enumerate() {
        let v: Vec<f64> = chars.iter().map(|c| c.values()[k]).collect();
        let cdf = empirical_cdf(&v)?;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let q = |p: f64| cdf.quantile(p);
        writeln!(quant, "{name},{},{},{},{},{},{mean}", q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)).unwrap();
        files.push(write_text(out, &format!("cdf_{name}.csv"), &cdf_csv(&v)?)?);
        files.push(write_text(out, &format!("hist_{name}.csv"), &histogram_csv(&v, bins)?)?);
    }
    files.push(write_text(out, "quantiles.csv", &quant)?);

    let taps: Vec<(f64, f64)> =
        records.iter().flat_map(|r| significant_taps(&r.tvir, cfg.metrics.significant_threshold_db)).collect();
    if !taps.is_empty() {
        let amp: Vec<f64> = taps.iter().map(|t| t.0).collect();
        let phase: Vec<f64> = taps.iter().map(|t| t.1).collect();
        files.push(write_text(out, "hist_tap_amplitude.csv", &histogram_csv(&amp, bins)?)?);
        files.push(write_text(out, "hist_tap_phase.csv", &histogram_csv(&phase, bins)?)?);
    }
    Ok(files)
}

fn schemes(cfg: &ExperimentConfig) -> Result<Vec<OfdmScheme>> {
    let mut out = Vec::new();
    for name in &cfg.comms.schemes {
        out.push(OfdmScheme::preset(name).map_err(|e| config_err(e.to_string()))?);
    }
    if let Some(p) = &cfg.comms.scheme_file {
        let text = std::fs::read_to_string(p)?;
        out.extend(OfdmScheme::parse_many(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?);
    }
    if out.is_empty() {
        return Err(config_err("comms lists no schemes"));
    }
    Ok(out)
}

pub(super) fn ber(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let schemes = schemes(cfg)?;
    let tvirs: Vec<Tvir> = read_records(input(cfg))?.into_iter().map(|r| r.tvir).collect();
    let mut summary = format!("{BER_HEADER}\n");
    let mut raw = String::from("scheme,snr_db,channel,bit_errors,bits_total,ber\n");
    for (k, s) in schemes.iter().enumerate() {
        // each scheme gets its own seed so adding one leaves the others alone
        let seed = cfg.seed.wrapping_add(k as u64);
        let results = evaluate_channels(&tvirs, s, &cfg.comms.snr_db, cfg.comms.trials, seed)?;
        for r in &results {
            writeln!(raw, "{},{},{},{},{},{}", r.scheme, r.snr_db, r.channel, r.bit_errors, r.bits_total, r.ber).unwrap();
        }
        for row in summarize(&results)? {
            writeln!(summary, "{}", row.csv_row()).unwrap();
        }
    }
    Ok(vec![write_text(out, "ber.csv", &summary)?, write_text(out, "ber_raw.csv", &raw)?])
}

pub(super) fn replay(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let records = read_records(input(cfg))?;
    let direct: Vec<UatvRecord> = records
        .iter()
        .enumerate()
        .map(|(i, r)| UatvRecord::new(direct_replay(&r.tvir), with_tag(&r.metadata, json!({"baseline": "direct", "source_index": i}))))
        .collect();
    let rc = cfg.replay.replay_config();
    let segments = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            stochastic_replay(&r.tvir, cfg.replay.target_snapshots, &rc, &mut rng).map(|segs| {
                segs.into_iter()
                    .enumerate()
                    .map(|(k, x)| UatvRecord::new(x, json!({"baseline": "stochastic", "source_index": i, "segment": k})))
                    .collect::<Vec<_>>()
            })
        })
        .collect::<uasim_eval::Result<Vec<_>>>()?;
    let stochastic: Vec<UatvRecord> = segments.into_iter().flatten().collect();
    Ok(vec![write_records(out, "direct.uatv", &direct)?, write_records(out, "stochastic.uatv", &stochastic)?])
}

/// Snapshot of `truth` nearest to `time` seconds, zero-padded or cut to
/// `taps` taps.
fn truth_at(truth: &Tvir, time: f64, taps: usize) -> Vec<Complex64> {
    let t = ((time / truth.time_step()).round() as usize).min(truth.num_snapshots() - 1);
    let mut v = vec![Complex64::new(0.0, 0.0); taps];
    for (j, x) in truth.snapshot(t).iter().take(taps).enumerate() {
        v[j] = *x;
    }
    v
}

/// Simulated probing: a periodic m-sequence passes through each TVIR with
/// noise, and NLMS tracks the channel from the received signal.
pub(super) fn nlms(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let nc = &cfg.nlms;
    let chips = msequence(nc.order).map_err(|e| config_err(e.to_string()))?;
    let records = read_records(input(cfg))?;
    let results = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<(UatvRecord, f64, usize)> {
            let x = &r.tvir;
            if (x.delay_step() * nc.filter.sample_rate - 1.0).abs() > 1e-9 {
                return Err(config_err(format!(
                    "nlms.filter.sample_rate {} does not match the TVIR delay rate {}",
                    nc.filter.sample_rate,
                    1.0 / x.delay_step()
                )));
            }
            let n = (x.duration() / x.delay_step()).round() as usize;
            let probe: Vec<Complex64> = (0..n).map(|k| Complex64::new(chips[k % chips.len()], 0.0)).collect();
            let rx = apply_channel(&probe, x, nc.snr_db, &mut stream_rng(cfg.seed, i as u64))?;
            let est = nlms_estimate(&probe, &rx, &nc.filter)?;
            let step = est.tvir.time_step();
            let mut flat = Vec::new();
            let mut truth = Vec::new();
            // the first snapshot is still converging
            for k in 1..est.tvir.num_snapshots() {
                flat.extend_from_slice(est.tvir.snapshot(k));
                truth.extend(truth_at(x, (k + 1) as f64 * step, nc.filter.num_taps));
            }
            let nmse = if flat.is_empty() { f64::NAN } else { nmse_db(&flat, &truth) };
            let meta = json!({"source": "nlms", "source_index": i, "snr_db": nc.snr_db, "flagged_snapshots": est.flagged});
            Ok((UatvRecord::new(est.tvir, meta), nmse, est.flagged.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = String::from("index,nmse_db,flagged_snapshots\n");
    for (i, (_, nmse, flagged)) in results.iter().enumerate() {
        writeln!(table, "{i},{nmse},{flagged}").unwrap();
    }
    let recs: Vec<UatvRecord> = results.into_iter().map(|(r, _, _)| r).collect();
    Ok(vec![write_records(out, "nlms.uatv", &recs)?, write_text(out, "nlms.csv", &table)?])
}
