use num_complex::Complex64;
use rand::Rng;
use statrs::function::erf::erfc;
use uasim_channel::{generate_records, GeneratorConfig};
use uasim_core::rng::{complex_normal, stream_rng};
use uasim_core::Tvir;
use uasim_eval::modem::*;

const DT: f64 = 0.05;
const DS: f64 = 1.0 / 12_000.0;

fn single_tap(snapshots: usize, taps: usize, g: Complex64) -> Tvir {
    let mut x = Tvir::zeros(snapshots, taps, DT, DS).unwrap();
    for t in 0..snapshots {
        x.snapshot_mut(t)[0] = g;
    }
    x
}

fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn blocks_for(scheme: &OfdmScheme, seconds: f64) -> usize {
    (seconds / DS) as usize / scheme.block_length()
}

#[test]
fn every_preset_loops_back_through_identity_channel() {
    let id = single_tap(20, 4, Complex64::new(1.0, 0.0));
    for s in OfdmScheme::presets() {
        let n = blocks_for(&s, 1.0).clamp(1, 2);
        let bits = random_bits(n * s.bits_per_block, 1);
        let tx = ofdm_modulate(&bits, &s).unwrap();
        let rx = apply_channel(&tx, &id, f64::INFINITY, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(rx, tx);
        let out = ofdm_demodulate(&rx, &s).unwrap();
        assert_eq!(ber(&bits, &out).unwrap().bit_errors, 0, "scheme {}", s.name);
    }
}

#[test]
fn flat_channel_is_equalised() {
    let g = Complex64::from_polar(0.5, std::f64::consts::FRAC_PI_4);
    let h = single_tap(20, 4, g);
    for name in ["NOF1", "13", "20"] {
        let s = OfdmScheme::preset(name).unwrap();
        let bits = random_bits(blocks_for(&s, 1.0) * s.bits_per_block, 2);
        let rx = apply_channel(&ofdm_modulate(&bits, &s).unwrap(), &h, f64::INFINITY, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(ofdm_demodulate(&rx, &s).unwrap(), bits, "scheme {name}");
    }
}

#[test]
fn static_channel_equals_lti_convolution() {
    let mut rng = stream_rng(3, 0);
    let taps = [(0, Complex64::new(0.8, -0.1)), (7, Complex64::new(-0.3, 0.4))];
    let mut h = Tvir::zeros(20, 10, DT, DS).unwrap();
    for t in 0..20 {
        for &(j, g) in &taps {
            h.snapshot_mut(t)[j] = g;
        }
    }
    let s: Vec<Complex64> = (0..5000).map(|_| complex_normal(&mut rng)).collect();
    let y = convolve_time_varying(&s, &h).unwrap();
    for n in 0..s.len() {
        let mut want = Complex64::new(0.0, 0.0);
        for &(j, g) in &taps {
            if n >= j {
                want += g * s[n - j];
            }
        }
        assert!((y[n] - want).norm() < 1e-6);
    }
}

#[test]
fn measured_snr_matches_request() {
    let h = single_tap(200, 2, Complex64::new(1.0, 0.0));
    let mut rng = stream_rng(4, 0);
    let s: Vec<Complex64> = (0..100_000).map(|_| complex_normal(&mut rng)).collect();
    for snr in [0.0, 12.0] {
        let y = apply_channel(&s, &h, snr, &mut rng).unwrap();
        let noise: Vec<Complex64> = y.iter().zip(&s).map(|(a, b)| a - b).collect();
        let measured = 10.0 * (mean_power(&s) / mean_power(&noise)).log10();
        assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
    }
}

#[test]
fn pure_noise_gives_coin_flips() {
    let s = OfdmScheme::preset("NOF1").unwrap();
    let blocks = 100_000 / s.bits_per_block + 1;
    let mut rng = stream_rng(5, 0);
    let noise: Vec<Complex64> = (0..blocks * s.block_length()).map(|_| complex_normal(&mut rng)).collect();
    let bits = random_bits(blocks * s.bits_per_block, 6);
    let rate = ber(&bits, &ofdm_demodulate(&noise, &s).unwrap()).unwrap().ber();
    assert!((rate - 0.5).abs() < 0.02, "{rate}");
}

#[test]
fn qpsk_awgn_matches_gaussian_tail() {
    let s = OfdmScheme::preset("NOF1").unwrap();
    let blocks = 1_000_000 / s.bits_per_block + 1;
    let seconds = (blocks * s.block_length()) as f64 * DS;
    let h = single_tap((seconds / DT).ceil() as usize + 1, 1, Complex64::new(1.0, 0.0));
    let eq = Equalizer::Known(vec![Complex64::new(1.0, 0.0); s.num_carriers]);
    for (k, ebn0_db) in [0.0f64, 2.0, 4.0, 6.0].into_iter().enumerate() {
        let bits = random_bits(blocks * s.bits_per_block, 10 + k as u64);
        let tx = ofdm_modulate(&bits, &s).unwrap();
        let rx = apply_channel(&tx, &h, snr_for_ebn0(&s, ebn0_db), &mut stream_rng(20 + k as u64, 0)).unwrap();
        let e = ber(&bits, &ofdm_demodulate_with(&rx, &s, &eq).unwrap()).unwrap();
        let ebn0 = 10f64.powf(ebn0_db / 10.0);
        let p = 0.5 * erfc(ebn0.sqrt());
        let sigma = (p * (1.0 - p) / e.bits_total as f64).sqrt();
        assert!(e.bits_total >= 1_000_000);
        assert!((e.ber() - p).abs() < 3.0 * sigma, "Eb/N0 {ebn0_db} dB: {} vs {p} (3 sigma {})", e.ber(), 3.0 * sigma);
    }
}

#[test]
fn ber_falls_with_snr_over_random_channels() {
    let cfg = GeneratorConfig { count: 30, seed: 12, ..Default::default() };
    let tvirs: Vec<Tvir> = generate_records(&cfg).unwrap().into_iter().map(|r| r.tvir).collect();
    let s = OfdmScheme::preset("6").unwrap();
    let snrs = [0.0, 10.0, 20.0];
    let res = evaluate_channels(&tvirs, &s, &snrs, 1, 99).unwrap();
    let at = |k: usize| -> Vec<f64> { res.iter().filter(|r| r.snr_db == snrs[k]).map(|r| r.ber).collect() };
    for k in 0..2 {
        let (lo, hi) = (at(k), at(k + 1));
        let d: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a - b).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // one-sided 95% test that the mean BER does not increase
        assert!(mean >= -1.645 * sd / n.sqrt(), "snr {} -> {}: mean diff {mean}", snrs[k], snrs[k + 1]);
    }
    let rows = summarize(&res).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.n_channels == 30 && r.p75_ber >= 0.0 && r.p75_ber <= 1.0));
}
