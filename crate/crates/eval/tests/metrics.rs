use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use uasim_channel::{generate_records, DynamicsConfig, GeneratorConfig};
use uasim_core::{rng::stream_rng, Tvir};
use uasim_eval::metrics::*;

const DT: f64 = 0.05;
const DS: f64 = 1.0 / 12_000.0;

fn random_tvir(t: usize, d: usize, seed: u64) -> Tvir {
    let mut rng = stream_rng(seed, 0);
    let data = (0..t * d).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    Tvir::from_flat(data, t, d, DT, DS).unwrap()
}

#[test]
fn pdp_matches_double_loop() {
    let x = random_tvir(20, 60, 1);
    let pdp = power_delay_profile(&x);
    for (j, p) in pdp.iter().enumerate() {
        let mut acc = 0.0;
        for t in 0..20 {
            let v = x.get(t, j);
            acc += v.re * v.re + v.im * v.im;
        }
        assert!((p - acc / 20.0).abs() < 1e-9);
    }
}

#[test]
fn two_tap_delay_spread_is_five_ms() {
    // equal taps at 0 and 5 ms (60 taps at 12 kHz), everything else -40 dB
    let d = 250;
    let data = (0..20 * d)
        .map(|i| match i % d {
            0 | 60 => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.01, 0.0),
        })
        .collect();
    let x = Tvir::from_flat(data, 20, d, DT, DS).unwrap();
    let pdp = power_delay_profile(&x);
    assert_eq!(delay_spread(&pdp, DS, -10.0).unwrap(), 60.0 * DS);
    assert!((delay_spread(&pdp, DS, -10.0).unwrap() - 0.005).abs() < 1e-15);
}

#[test]
fn static_simulated_channel() {
    let cfg = GeneratorConfig { count: 3, seed: 4, dynamics: DynamicsConfig::still(), ..Default::default() };
    for rec in generate_records(&cfg).unwrap() {
        let ch = characteristics(&rec.tvir).unwrap();
        assert_eq!(ch.doppler_spread_10db, 0.0);
        assert!(ch.coherence_time_saturated);
        assert!((ch.coherence_time - rec.tvir.duration()).abs() < 1e-12);
    }
}

#[test]
fn uniform_histogram() {
    let mut rng = stream_rng(8, 0);
    let v: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let h = histogram(&v, 10, (0.0, 1.0)).unwrap();
    for c in h {
        assert!((c as f64 / 1e5 - 0.1).abs() < 0.01);
    }
}

#[test]
fn delay_metrics_ignore_time_reversal() {
    let x = random_tvir(20, 40, 2);
    let rev = Tvir::from_snapshots((0..20).rev().map(|t| x.snapshot(t).to_vec()).collect(), DT, DS).unwrap();
    let (a, b) = (power_delay_profile(&x), power_delay_profile(&rev));
    assert_eq!(delay_spread(&a, DS, -10.0).unwrap(), delay_spread(&b, DS, -10.0).unwrap());
    assert!((rms_delay_spread(&a, DS).unwrap() - rms_delay_spread(&b, DS).unwrap()).abs() < 1e-15);
    assert!((mean_delay(&a, DS).unwrap() - mean_delay(&b, DS).unwrap()).abs() < 1e-15);
    let cb = |p: &[f64]| coherence_bandwidth(p, DS, DEFAULT_COHERENCE_THRESHOLD).unwrap().value;
    assert!((cb(&a) - cb(&b)).abs() < 1e-9);
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spreads_ignore_complex_gain(seed in 0u64..1000, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(re.abs() + im.abs() > 1e-2);
        let c = Complex64::new(re, im);
        let x = random_tvir(20, 30, seed);
        let y = x.map(|v| v * c).unwrap();
        let (a, b) = (characteristics(&x).unwrap(), characteristics(&y).unwrap());
        prop_assert!(close(a.mean_delay, b.mean_delay));
        prop_assert!(close(a.delay_spread_10db, b.delay_spread_10db));
        prop_assert!(close(a.rms_delay_spread, b.rms_delay_spread));
        prop_assert!(close(a.doppler_spread_10db, b.doppler_spread_10db));
        prop_assert!(close(a.coherence_time, b.coherence_time));
        prop_assert!(close(a.coherence_bandwidth, b.coherence_bandwidth));
        prop_assert!(close(a.num_significant_taps, b.num_significant_taps));
    }

    #[test]
    fn metrics_respect_bounds(seed in 0u64..1000, t in 2usize..30, d in 1usize..40) {
        let x = random_tvir(t, d, seed);
        let ch = characteristics(&x).unwrap();
        prop_assert!(ch.delay_spread_10db >= 0.0 && ch.delay_spread_10db <= (d - 1) as f64 * DS + 1e-15);
        prop_assert!(ch.rms_delay_spread >= 0.0);
        prop_assert!(ch.doppler_spread_10db >= 0.0 && ch.doppler_spread_10db <= 1.0 / DT);
        prop_assert!(ch.coherence_time >= 0.0 && ch.coherence_time <= x.duration() + 1e-12);
        prop_assert!(ch.coherence_bandwidth >= 0.0 && ch.coherence_bandwidth <= 0.5 / DS + 1e-9);
        prop_assert!(ch.num_significant_taps >= 1.0);
    }

    #[test]
    fn cdf_is_monotone(v in prop::collection::vec(-1e3f64..1e3, 1..200), probes in prop::collection::vec(-2e3f64..2e3, 2..20)) {
        let cdf = empirical_cdf(&v).unwrap();
        let mut p = probes.clone();
        p.sort_by(f64::total_cmp);
        for w in p.windows(2) {
            prop_assert!(cdf.eval(w[0]) <= cdf.eval(w[1]));
        }
        prop_assert_eq!(cdf.eval(f64::NEG_INFINITY), 0.0);
        prop_assert_eq!(cdf.eval(f64::INFINITY), 1.0);
        prop_assert_eq!(cdf.eval(-1e3 - 1.0), 0.0);
        prop_assert_eq!(cdf.eval(1e3), 1.0);
    }
}
