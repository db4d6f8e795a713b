//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p uasim-cli --test acceptance`. Criterion numbers
//! given as arguments restrict the run, e.g. `-- 1 3 12`. Failures are
//! reported but only fail the process when `UASIM_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use statrs::function::erf::erfc;
use uasim_channel::{generate_records, split_pair, DynamicsConfig, GeneratorConfig};
use uasim_core::rng::{complex_normal, stream_rng};
use uasim_core::{
    defeaturize, effective_compression_ratio, featurize, latent_compression_ratio, normalize_tvir, Complex64,
    FeatureSeq, Tvir,
};
use uasim_eval::emd::{emd, EmdConfig};
use uasim_eval::metrics::{characteristics, delay_spread, power_delay_profile};
use uasim_eval::modem::{
    apply_channel, ber, ofdm_demodulate, ofdm_demodulate_with, ofdm_modulate, snr_for_ebn0, Equalizer, OfdmScheme,
};
use uasim_eval::probe::{msequence, nlms_estimate, nmse_db, NlmsConfig};
use uasim_models::autoencoder::{amplitude_nmse_db, train_autoencoder, AeConfig, AeTrainConfig, Autoencoder, InputScaling};
use uasim_models::diffusion::*;
use uasim_nn::{gradient_check, BiLstm, Dense, Graph, LayerNorm, ParamStore, Tensor};

const DT: f64 = 0.05;
const DS: f64 = 1.0 / 12_000.0;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn within(elapsed: Duration, limit_secs: u64, what: &str) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_secs) {
        Err(format!("{what} took {:.0} s, limit {limit_secs} s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn c1_schedule() -> Outcome {
    let lin = NoiseSchedule::linear(100, 1e-4, 1e-2).map_err(e)?;
    ensure!(lin.beta(1) == 1e-4 && lin.beta(100) == 1e-2, "linear endpoints {} {}", lin.beta(1), lin.beta(100));
    let oracle = |frac: f64| 1e-4 + (1e-2 - 1e-4) / (1.0 + (-10.0 * (frac - 0.5)).exp());
    let sig = NoiseSchedule::sigmoid(100, 1e-4, 1e-2).map_err(e)?;
    let mut worst = 0.0f64;
    for frac in [0.0, 0.5, 1.0] {
        worst = worst.max((sigmoid_beta(frac, 1e-4, 1e-2) - oracle(frac)).abs());
    }
    worst = worst.max((sig.beta(50) - oracle(0.5)).abs()).max((sig.beta(100) - oracle(1.0)).abs());
    ensure!(worst < 1e-12, "sigmoid deviates by {worst:e}");
    let mid = sigmoid_beta(0.5, 1e-4, 1e-2);
    ensure!((mid - 5.05e-3).abs() < 1e-12, "midpoint {mid}");
    Ok(format!("beta_1 = {}, beta_100 = {}, sigmoid midpoint {mid:.6e}, max deviation {worst:.1e}", lin.beta(1), lin.beta(100)))
}

fn c2_diffusion_algebra() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for s in [NoiseSchedule::default(), NoiseSchedule::sigmoid(100, 1e-4, 1e-2).map_err(e)?] {
        let mut prod = 1.0;
        for t in 1..=s.steps() {
            prod *= 1.0 - s.beta(t);
            worst = worst.max((s.alpha_bar(t) - prod).abs());
        }
    }
    ensure!(worst < 1e-12, "alpha_bar product error {worst:e}");

    let s = NoiseSchedule::default();
    let n = 100_000;
    let z0 = [0.8];
    let mut max_z = 0.0f64;
    for t in [1, 10, 50, 100] {
        let mut rng = stream_rng(8, t as u64);
        let it: Vec<f64> = (0..n).map(|_| iterated_forward(&z0, t, &mut rng, &s).map(|v| v[0])).collect::<Result<_, _>>().map_err(e)?;
        let cf: Vec<f64> = (0..n)
            .map(|_| forward_sample(&z0, t, &standard_normal(&mut rng, 1), &s).map(|v| v[0]))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let ((m1, v1), (m2, v2)) = (moments(&it), moments(&cf));
        let var = 1.0 - s.alpha_bar(t);
        let zm = (m1 - m2).abs() / (2.0 * var / n as f64).sqrt();
        let zv = (v1 - v2).abs() / (var * (4.0 / (n as f64 - 1.0)).sqrt());
        ensure!(zm < 3.0 && zv < 3.0, "t = {t}: mean gap {zm:.2} sigma, variance gap {zv:.2} sigma");
        max_z = max_z.max(zm).max(zv);
    }

    let one = NoiseSchedule::linear(1, 1e-4, 1e-2).map_err(e)?;
    let mut rng = stream_rng(11, 0);
    let mut rec = 0.0f64;
    for _ in 0..100 {
        let z0 = standard_normal(&mut rng, 128);
        let eps = standard_normal(&mut rng, 128);
        let zt = forward_sample(&z0, 1, &eps, &one).map_err(e)?;
        let back = reverse_step(&zt, &eps, 1, &one, &mut rng).map_err(e)?;
        rec = back.iter().zip(&z0).map(|(a, b)| (a - b).abs()).fold(rec, f64::max);
    }
    ensure!(rec < 1e-6, "one-step recovery error {rec:e}");
    within(start.elapsed(), 60, "criterion")?;
    Ok(format!("product error {worst:.1e}, worst moment gap {max_z:.2} sigma, recovery error {rec:.1e}"))
}

fn c3_compression() -> Outcome {
    let latent = latent_compression_ratio(20, 250, 128);
    let effective = effective_compression_ratio(12_000.0, 20.0, 20, 250, 128);
    ensure!(latent.round() == 78.0, "latent ratio {latent}");
    ensure!(effective == 46_800.0, "effective ratio {effective}");
    Ok(format!("{latent} (78x), {effective}x"))
}

fn c4_featurization() -> Outcome {
    let mut rng = stream_rng(40, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let cir: Vec<Complex64> = (0..250).map(|_| complex_normal(&mut rng)).collect();
        let back = defeaturize(&featurize(&cir).map_err(e)?).map_err(e)?.cir;
        worst = cir.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(worst, f64::max);
    }
    ensure!(worst < 1e-6, "round-trip error {worst:e}");
    for seed in 0..200 {
        let mut rng = stream_rng(41, seed);
        let scale = rng.random_range(1e-3..1e3);
        let data = (0..20 * 250).map(|_| complex_normal(&mut rng) * scale).collect();
        let x = Tvir::from_flat(data, 20, 250, DT, DS).map_err(e)?;
        let (y, _) = normalize_tvir(&x, 20).map_err(e)?;
        let first = y.snapshot(0);
        ensure!(first[20].norm() == 1.0, "seed {seed}: anchor amplitude {}", first[20].norm());
        ensure!(first.iter().all(|v| v.norm() <= 1.0), "seed {seed}: a tap exceeds the anchor");
    }
    Ok(format!("max round-trip error {worst:.1e} over 1e4 CIRs; 200 TVIRs straightened to unit peak at tap 20"))
}

fn c5_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(50, 0);
    let mut rows = Vec::new();

    let mut s = ParamStore::<f64>::new();
    let d = Dense::new(&mut s, "d", 4, 3, &mut rng).map_err(e)?;
    let (x, t) = (rand_vec(&mut rng, 8), rand_vec(&mut rng, 6));
    let r = gradient_check(
        &mut s,
        |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let xi = g.input(2, 4, x.clone())?;
            let y = d.forward(g, s, xi)?;
            let y = g.tanh(y);
            g.squared_error(y, t.clone(), 1.0)
        },
        1e-5,
        None,
        &mut rng,
    )
    .map_err(e)?;
    rows.push(("dense", r));

    let (b, h) = (3, 4);
    let mut s = ParamStore::<f64>::new();
    let d = Dense::new(&mut s, "gates", 5, 4 * h, &mut rng).map_err(e)?;
    let (x, c0, t) = (rand_vec(&mut rng, b * 5), rand_vec(&mut rng, b * h), rand_vec(&mut rng, b * 2 * h));
    let r = gradient_check(
        &mut s,
        |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let xi = g.input(b, 5, x.clone())?;
            let gates = d.forward(g, s, xi)?;
            let c = g.input(b, h, c0.clone())?;
            let out = g.lstm_cell(gates, c)?;
            g.squared_error(out, t.clone(), 1.0)
        },
        1e-5,
        None,
        &mut rng,
    )
    .map_err(e)?;
    rows.push(("lstm cell", r));

    let mut s = ParamStore::<f64>::new();
    let stack = BiLstm::new(&mut s, "b", 3, 4, 2, &mut rng).map_err(e)?;
    let (x, t) = (rand_vec(&mut rng, 2 * 2 * 3), rand_vec(&mut rng, 2 * 2 * 8));
    let r = gradient_check(
        &mut s,
        |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let xi = g.input(4, 3, x.clone())?;
            let out = stack.forward(g, s, xi, 2, 2)?;
            g.squared_error(out.sequence, t.clone(), 1.0)
        },
        1e-5,
        None,
        &mut rng,
    )
    .map_err(e)?;
    rows.push(("bilstm", r));

    let mut s = ParamStore::<f64>::new();
    let d = Dense::new(&mut s, "d", 5, 6, &mut rng).map_err(e)?;
    let ln = LayerNorm::new(&mut s, "ln", 6).map_err(e)?;
    s.set("ln.gain", Tensor::new(vec![6], rand_vec(&mut rng, 6)).map_err(e)?).map_err(e)?;
    s.set("ln.bias", Tensor::new(vec![6], rand_vec(&mut rng, 6)).map_err(e)?).map_err(e)?;
    let (x, t) = (rand_vec(&mut rng, 3 * 5), rand_vec(&mut rng, 3 * 6));
    let r = gradient_check(
        &mut s,
        |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let xi = g.input(3, 5, x.clone())?;
            let y = d.forward(g, s, xi)?;
            let y = ln.forward(g, s, y)?;
            g.squared_error(y, t.clone(), 1.0)
        },
        1e-5,
        None,
        &mut rng,
    )
    .map_err(e)?;
    rows.push(("layer norm", r));

    let mut m = DiffusionModel::new(DenoiserConfig { latent_dim: 3, width: 5 }, NoiseSchedule::default(), 2).map_err(e)?;
    let head = m.layers().head.w;
    for v in m.store_mut().value_mut(head).data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let z_t: Vec<Vec<f64>> = (0..4).map(|_| standard_normal(&mut rng, 3)).collect();
    let z_c: Vec<Vec<f64>> = (0..4).map(|_| standard_normal(&mut rng, 3)).collect();
    let eps: Vec<Vec<f64>> = (0..4).map(|_| standard_normal(&mut rng, 3)).collect();
    rows.push(("denoiser", m.gradient_check(&z_t, &z_c, &[1, 17, 50, 100], &eps, 1e-6, None, &mut rng).map_err(e)?));

    // anchor tap plus one slowly rotating echo
    let items: Vec<FeatureSeq> = (0..2)
        .map(|i| {
            let mut x = Tvir::zeros(20, 6, DT, DS)?;
            for t in 0..20 {
                x.snapshot_mut(t)[1] = Complex64::new(1.0, 0.0);
                x.snapshot_mut(t)[3 + i] = Complex64::from_polar(0.5, 0.4 * i as f64 + 0.02 * t as f64);
            }
            FeatureSeq::from_tvir(&x)
        })
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let cfg = AeConfig { taps: 6, hidden: 5, layers: 2, latent_dim: 4, ..Default::default() };
    let mut ae = Autoencoder::new(cfg, 5).map_err(e)?;
    ae.set_input_scaling(Some(InputScaling::fit(&items).map_err(e)?)).map_err(e)?;
    rows.push(("autoencoder loss", ae.gradient_check(&items, 1.0, 1e-5, Some(12), &mut rng).map_err(e)?));

    let mut text = Vec::new();
    for (name, r) in &rows {
        ensure!(r.max_rel_error < 1e-4 && r.checked > 0, "{name}: {r:?}");
        text.push(format!("{name} {:.1e}", r.max_rel_error));
    }
    within(start.elapsed(), 300, "criterion")?;
    Ok(format!("max relative error: {}", text.join(", ")))
}

fn c6_training_smoke() -> Outcome {
    // 1000 paired records give 2000 straightened TVIRs and 1000 latent pairs
    let gen = GeneratorConfig { count: 1000, paired: true, seed: 60, ..Default::default() };
    let records = generate_records(&gen).map_err(e)?;
    let mut halves = Vec::new();
    for r in &records {
        let (c, t) = split_pair(&r.tvir, gen.anchor_index).map_err(e)?;
        halves.push(FeatureSeq::from_tvir(&c).map_err(e)?);
        halves.push(FeatureSeq::from_tvir(&t).map_err(e)?);
    }
    let (val, train) = halves.split_at(200);
    let mut ae = Autoencoder::new(AeConfig { hidden: 64, ..Default::default() }, 60).map_err(e)?;
    let tc = AeTrainConfig { seed: 60, time_limit_secs: Some(1800.0), ..AeTrainConfig::preset("pretrain").map_err(e)? };
    let start = Instant::now();
    let rep = train_autoencoder(&mut ae, train, val, &tc, None).map_err(e)?;
    let ae_secs = start.elapsed().as_secs_f64();
    let nmse_train = amplitude_nmse_db(train, &ae.reconstruct_batch(train).map_err(e)?).map_err(e)?;
    let nmse_val = amplitude_nmse_db(val, &ae.reconstruct_batch(val).map_err(e)?).map_err(e)?;

    let z = ae.encode_batch(&halves).map_err(e)?;
    let pairs: Vec<ConditionPair> =
        z.chunks_exact(2).map(|p| ConditionPair { cond: p[0].clone(), target: p[1].clone() }).collect();
    let (dval, dtrain) = pairs.split_at(100);
    let dc = DenoiserConfig { latent_dim: ae.config().latent_dim, ..Default::default() };
    let mut dm = DiffusionModel::new(dc, NoiseSchedule::default(), 61).map_err(e)?;
    let dcfg = DiffTrainConfig { max_epochs: 20, seed: 61, ..Default::default() };
    let dr = train_diffusion(&mut dm, dtrain, dval, &dcfg, None).map_err(e)?;
    let ratio = dr.best_val / dr.initial_val;

    let detail = format!(
        "AE {} epochs in {ae_secs:.0} s{}: amplitude NMSE {nmse_train:.2} dB train, {nmse_val:.2} dB validation; \
         diffusion val loss {:.2} -> {:.2} ({ratio:.3}x)",
        rep.history.len(),
        if rep.timed_out { " (time limit)" } else { "" },
        dr.initial_val,
        dr.best_val,
    );
    ensure!(nmse_train < -15.0 && nmse_val < -10.0 && ratio < 0.9, "{detail}");
    Ok(detail)
}

/// `w N((-2, 0), 0.25 I) + (1 - w) N((2, 0), 0.25 I)`.
fn mixture(n: usize, w: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let c = if rng.random::<f64>() < w { -2.0 } else { 2.0 };
            let z = standard_normal(&mut rng, 2);
            vec![c + 0.5 * z[0], 0.5 * z[1]]
        })
        .collect()
}

fn c7_generative() -> Outcome {
    let w = 0.3;
    let sched = NoiseSchedule::linear(100, 1e-4, 0.2).map_err(e)?;
    let mut m = DiffusionModel::new(DenoiserConfig { latent_dim: 2, width: 128 }, sched, 6).map_err(e)?;
    let cfg = DiffTrainConfig { max_epochs: 150, batch_size: 64, patience: 50, seed: 2, ..Default::default() };
    fine_tune_generative(&mut m, &mixture(4000, w, 21), &cfg, None).map_err(e)?;
    let out = m.generate_batch(&mixture(10_000, w, 22), 9).map_err(e)?;
    // histogram oracle: the two halves of the first axis
    let left = out.iter().filter(|z| z[0] < 0.0).count() as f64 / out.len() as f64;
    let near = |c: f64| out.iter().filter(|z| (z[0] - c).abs() < 1.5).count() as f64 / out.len() as f64;
    let (nl, nr) = (near(-2.0), near(2.0));
    let detail = format!("weights {left:.3}/{:.3} (true {w}/{}), mass near modes {nl:.3}/{nr:.3}", 1.0 - left, 1.0 - w);
    ensure!((left - w).abs() < 0.05 && nl > 0.25 && nr > 0.6, "{detail}");
    Ok(detail)
}

fn c8_metrics() -> Outcome {
    let d = 250;
    let data = (0..20 * d)
        .map(|i| match i % d {
            0 | 60 => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.01, 0.0),
        })
        .collect();
    let x = Tvir::from_flat(data, 20, d, DT, DS).map_err(e)?;
    let spread = delay_spread(&power_delay_profile(&x), DS, -10.0).map_err(e)?;
    ensure!(spread == 60.0 * DS && (spread - 5e-3).abs() < 1e-15, "two-tap spread {spread}");

    let still = GeneratorConfig { count: 5, seed: 80, dynamics: DynamicsConfig::still(), ..Default::default() };
    for r in generate_records(&still).map_err(e)? {
        let c = characteristics(&r.tvir).map_err(e)?;
        ensure!(c.doppler_spread_10db == 0.0, "static Doppler spread {}", c.doppler_spread_10db);
        ensure!(c.coherence_time_saturated && c.coherence_time == r.tvir.duration(), "static coherence time {}", c.coherence_time);
    }

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    let mut rng = stream_rng(81, 0);
    for r in generate_records(&GeneratorConfig { count: 20, seed: 82, ..Default::default() }).map_err(e)? {
        let g = Complex64::from_polar(rng.random_range(0.01..100.0), rng.random_range(-PI..PI));
        let (a, b) = (characteristics(&r.tvir).map_err(e)?, characteristics(&r.tvir.map(|v| v * g).map_err(e)?).map_err(e)?);
        let (va, vb) = (a.values(), b.values());
        for k in (0..10).filter(|&k| k != 7) {
            ensure!(close(va[k], vb[k]), "metric {k} changed under scaling: {} vs {}", va[k], vb[k]);
        }
        // total gain is the one metric that moves, by exactly the gain in dB
        ensure!(close(vb[7] - va[7], 20.0 * g.norm().log10()), "total gain shift {}", vb[7] - va[7]);
    }
    Ok(format!("two-tap spread {:.1} ms; static channels: zero Doppler, saturated coherence; 20 TVIRs scale-invariant", spread * 1e3))
}

fn c9_modem() -> Outcome {
    let single = |snapshots: usize| {
        let mut x = Tvir::zeros(snapshots, 1, DT, DS).unwrap();
        for t in 0..snapshots {
            x.snapshot_mut(t)[0] = Complex64::new(1.0, 0.0);
        }
        x
    };
    let bits = |n: usize, seed: u64| -> Vec<u8> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    };
    let presets = OfdmScheme::presets();
    ensure!(presets.len() == 33, "{} presets", presets.len());
    let id = single(20);
    for s in &presets {
        let n = ((1.0 / DS) as usize / s.block_length()).clamp(1, 2);
        let b = bits(n * s.bits_per_block, 90);
        let rx = apply_channel(&ofdm_modulate(&b, s).map_err(e)?, &id, f64::INFINITY, &mut stream_rng(0, 0)).map_err(e)?;
        let errs = ber(&b, &ofdm_demodulate(&rx, s).map_err(e)?).map_err(e)?.bit_errors;
        ensure!(errs == 0, "scheme {}: {errs} loopback errors", s.name);
    }

    let s = OfdmScheme::preset("NOF1").map_err(e)?;
    let blocks = 1_000_000 / s.bits_per_block + 1;
    let h = single(((blocks * s.block_length()) as f64 * DS / DT).ceil() as usize + 1);
    let eq = Equalizer::Known(vec![Complex64::new(1.0, 0.0); s.num_carriers]);
    let mut worst = 0.0f64;
    for (k, ebn0_db) in [0.0f64, 2.0, 4.0, 6.0].into_iter().enumerate() {
        let b = bits(blocks * s.bits_per_block, 91 + k as u64);
        let tx = ofdm_modulate(&b, &s).map_err(e)?;
        let rx = apply_channel(&tx, &h, snr_for_ebn0(&s, ebn0_db), &mut stream_rng(95 + k as u64, 0)).map_err(e)?;
        let r = ber(&b, &ofdm_demodulate_with(&rx, &s, &eq).map_err(e)?).map_err(e)?;
        let p = 0.5 * erfc(10f64.powf(ebn0_db / 10.0).sqrt());
        let z = (r.ber() - p).abs() / (p * (1.0 - p) / r.bits_total as f64).sqrt();
        ensure!(r.bits_total >= 1_000_000 && z < 3.0, "Eb/N0 {ebn0_db} dB: BER {} vs {p} ({z:.2} sigma)", r.ber());
        worst = worst.max(z);
    }

    let blocks = 100_000 / s.bits_per_block + 1;
    let mut rng = stream_rng(99, 0);
    let noise: Vec<Complex64> = (0..blocks * s.block_length()).map(|_| complex_normal(&mut rng)).collect();
    let coin = ber(&bits(blocks * s.bits_per_block, 98), &ofdm_demodulate(&noise, &s).map_err(e)?).map_err(e)?.ber();
    ensure!((coin - 0.5).abs() < 0.02, "pure-noise BER {coin}");
    Ok(format!("{} presets loop back error-free; AWGN worst {worst:.2} sigma; pure noise BER {coin:.4}", presets.len()))
}

fn c10_nlms() -> Outcome {
    let chips = msequence(13).map_err(e)?;
    let n = chips.len();
    ensure!(n == 8191, "period {n}");
    for lag in 1..n {
        let r: f64 = (0..n).map(|i| chips[i] * chips[(i + lag) % n]).sum();
        ensure!(r == -1.0, "lag {lag}: autocorrelation {r}");
    }
    let mut rng = stream_rng(100, 0);
    let taps = 64;
    let h: Vec<Complex64> = (0..taps).map(|j| complex_normal(&mut rng) * (-(j as f64) / 16.0).exp()).collect();
    let probe: Vec<Complex64> = chips.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let rx: Vec<Complex64> = (0..n).map(|k| (0..taps.min(k + 1)).map(|j| h[j] * probe[k - j]).sum()).collect();
    let cfg = NlmsConfig { num_taps: taps, samples_per_snapshot: n, ..Default::default() };
    let est = nlms_estimate(&probe, &rx, &cfg).map_err(e)?;
    let nmse = nmse_db(est.tvir.snapshot(0), &h);
    ensure!(nmse < -20.0, "NMSE {nmse} dB");
    Ok(format!("off-peak autocorrelation -1 at all {} lags; static NMSE {nmse:.1} dB after one period", n - 1))
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

fn c11_emd() -> Outcome {
    let cfg = EmdConfig::default();
    let mut worst = 0.0f64;
    let mut inputs: Vec<Vec<f64>> = vec![vec![0.0; 50], vec![3.0; 7], vec![1.0, -1.0, 1.0, -1.0], (0..100).map(|i| i as f64).collect()];
    for seed in 0..100 {
        let mut rng = stream_rng(110, seed);
        let n = rng.random_range(4..600);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        inputs.push((0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect());
        inputs.push((0..n).map(|i| scale * ((0.001 * (i * i) as f64).sin() + 0.01 * i as f64)).collect());
    }
    for x in &inputs {
        let r = emd(x, &cfg).map_err(e)?;
        worst = r.reconstruct().iter().zip(x).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    ensure!(worst < 1e-8, "reconstruction error {worst:e}");

    let n = 200;
    let sine: Vec<f64> = (0..n).map(|i| (2.0 * PI * 5.0 * i as f64 / n as f64).sin()).collect();
    let trend: Vec<f64> = (0..n).map(|i| 3.0 * i as f64 / n as f64 - 1.0).collect();
    let x: Vec<f64> = sine.iter().zip(&trend).map(|(a, b)| a + b).collect();
    let r = emd(&x, &cfg).map_err(e)?;
    ensure!(!r.imfs.is_empty(), "no IMFs");
    let slow: Vec<f64> = x.iter().zip(&r.imfs[0]).map(|(a, b)| a - b).collect();
    let (cs, ct) = (corr(&r.imfs[0], &sine), corr(&slow, &trend));
    ensure!(cs > 0.95 && ct > 0.95, "sinusoid correlation {cs}, trend correlation {ct}");
    Ok(format!("max reconstruction error {worst:.1e} over {} inputs; sinusoid {cs:.4}, trend {ct:.4}", inputs.len()))
}

const PIPELINE: &str = r#"
seed = 12

[io]
output_dir = "run"

[sim]
count = 500
paired = true

[autoencoder.model]
hidden = 32
layers = 1
latent_dim = 32

[autoencoder.train]
max_epochs = 3
batch_size = 32

[diffusion]
width = 128

[diffusion.train]
max_epochs = 5
batch_size = 32

[generate]
count = 100

[comms]
schemes = ["NOF1", "6"]
snr_db = [0.0, 10.0, 20.0]
"#;

/// Every pipeline command in order, as (command, overrides).
const STEPS: &[(&str, &[&str])] = &[
    ("sim-gen", &[]),
    ("ae-train", &["io.input=\"run/dataset.uatv\""]),
    ("ae-finetune", &["io.input=\"run/dataset.uatv\"", "io.ae_checkpoint=\"run/autoencoder.uack\""]),
    ("diff-train", &["io.input=\"run/dataset.uatv\"", "io.ae_checkpoint=\"run/autoencoder.uack\""]),
    (
        "diff-finetune",
        &["io.input=\"run/dataset.uatv\"", "io.ae_checkpoint=\"run/autoencoder.uack\"", "io.diffusion_checkpoint=\"run/diffusion.uack\""],
    ),
    ("encode", &["io.input=\"run/dataset.uatv\"", "io.ae_checkpoint=\"run/autoencoder.uack\""]),
    ("decode", &["io.input=\"run/latents.json\"", "io.ae_checkpoint=\"run/autoencoder.uack\""]),
    (
        "generate",
        &["io.input=\"run/dataset.uatv\"", "io.ae_checkpoint=\"run/autoencoder.uack\"", "io.diffusion_checkpoint=\"run/diffusion.uack\""],
    ),
    ("metrics", &["io.input=\"run/generated.uatv\""]),
    ("ber", &["io.input=\"run/generated.uatv\""]),
    // replay needs long measurements: 12 s records in a second directory
    ("sim-gen", &["io.output_dir=\"long\"", "sim.paired=false", "sim.count=10", "sim.snapshots=240"]),
    ("replay", &["io.input=\"long/dataset.uatv\""]),
    ("nlms", &["io.input=\"run/generated.uatv\""]),
];

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    std::fs::write(dir.join("pipeline.toml"), PIPELINE).map_err(e)?;
    for (cmd, sets) in STEPS {
        let mut c = Command::new(env!("CARGO_BIN_EXE_uasim"));
        c.current_dir(dir).args([cmd, "-c", "pipeline.toml", "--deterministic"]);
        for s in *sets {
            c.args(["--set", s]);
        }
        let out = c.output().map_err(e)?;
        ensure!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
        let verify = Command::new(env!("CARGO_BIN_EXE_uasim"))
            .current_dir(dir)
            .args(["verify", String::from_utf8_lossy(&out.stdout).trim()])
            .output()
            .map_err(e)?;
        ensure!(verify.status.success(), "{cmd}: manifest does not verify");
    }
    let mut files = BTreeMap::new();
    for sub in ["run", "long"] {
        for entry in std::fs::read_dir(dir.join(sub)).map_err(e)? {
            let p = entry.map_err(e)?.path();
            let name = format!("{sub}/{}", p.file_name().unwrap().to_string_lossy());
            files.insert(name, std::fs::read(&p).map_err(e)?);
        }
    }
    Ok(files)
}

fn c12_determinism() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?);
    let first = run_pipeline(a.path())?;
    let once = start.elapsed();
    let second = run_pipeline(b.path())?;
    ensure!(first.keys().eq(second.keys()), "different artifact sets");
    let differing: Vec<&String> = first.iter().filter(|(k, v)| second[*k] != **v).map(|(k, _)| k).collect();
    ensure!(differing.is_empty(), "artifacts differ: {differing:?}");
    within(once, 3600, "one pipeline run")?;
    let bytes: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} commands, {} artifacts ({bytes} bytes) byte-identical; one run {:.1} s", STEPS.len(), first.len(), once.as_secs_f64()))
}

const CRITERIA: [(&str, fn() -> Outcome); 12] = [
    ("schedule fidelity", c1_schedule),
    ("diffusion algebra", c2_diffusion_algebra),
    ("compression arithmetic", c3_compression),
    ("featurization", c4_featurization),
    ("gradient correctness", c5_gradients),
    ("training smoke", c6_training_smoke),
    ("generative sanity", c7_generative),
    ("metric oracles", c8_metrics),
    ("modem correctness", c9_modem),
    ("NLMS probing", c10_nlms),
    ("EMD", c11_emd),
    ("end-to-end determinism", c12_determinism),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, check)) in CRITERIA.iter().enumerate() {
        let n = k + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2}. {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2}. {name} ({secs:.1} s): {detail}");
            }
        }
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("UASIM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
