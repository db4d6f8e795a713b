use std::f64::consts::PI;

use uasim_eval::emd::*;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn separates_sinusoid_from_trend() {
    let n = 200;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let sine: Vec<f64> = t.iter().map(|&t| (2.0 * PI * 5.0 * t).sin()).collect();
    let trend: Vec<f64> = t.iter().map(|&t| 3.0 * t - 1.0).collect();
    let x: Vec<f64> = sine.iter().zip(&trend).map(|(a, b)| a + b).collect();
    let r = emd(&x, &EmdConfig::default()).unwrap();
    assert!(!r.imfs.is_empty());
    let c1 = corr(&r.imfs[0], &sine);
    assert!(c1 > 0.95, "IMF1 correlation {c1}");
    // the slow part is everything after the first IMF
    let slow: Vec<f64> = x.iter().zip(&r.imfs[0]).map(|(a, b)| a - b).collect();
    assert!(corr(&slow, &trend) > 0.95);
    assert!(corr(&r.residue, &trend) > 0.9);
    let back = r.reconstruct();
    assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn imfs_are_nearly_balanced_on_a_chirp() {
    let x: Vec<f64> = (0..400).map(|i| (0.002 * (i * i) as f64).sin() + 0.5 * (0.05 * i as f64).sin()).collect();
    let r = emd(&x, &EmdConfig::default()).unwrap();
    let imf = &r.imfs[0];
    let (max, min) = extrema(imf);
    let diff = (max.len() + min.len()).abs_diff(zero_crossings(imf));
    assert!(diff <= 2, "extrema {} zero crossings {}", max.len() + min.len(), zero_crossings(imf));
}
