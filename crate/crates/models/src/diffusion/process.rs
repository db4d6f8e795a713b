//! Forward corruption and the single reverse step.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::schedule::NoiseSchedule;
use crate::error::{invalid, Result};

pub const TIME_EMBEDDING_DIM: usize = 32;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_sample(z0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if eps.len() != z0.len() {
        return Err(invalid(format!("noise has {} values, latent {}", eps.len(), z0.len())));
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(z0.iter().zip(eps).map(|(&z, &e)| a * z + b * e).collect())
}

/// Applies `z_s = sqrt(1 - beta_s) z_{s-1} + sqrt(beta_s) eps` for `s = 1..=t`.
pub fn iterated_forward<R: Rng + ?Sized>(z0: &[f64], t: usize, rng: &mut R, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    let mut z = z0.to_vec();
    for s in 1..=t {
        let b = sched.beta(s);
        let (keep, add) = ((1.0 - b).sqrt(), b.sqrt());
        for v in z.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v = keep * *v + add * e;
        }
    }
    Ok(z)
}

/// Sinusoidal embedding of the integer step: components `2k` and `2k + 1`
/// are `sin(t w_k)` and `cos(t w_k)` with `w_k = 10000^(-2k / dim)`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    for k in 0..dim.div_ceil(2) {
        let w = 10_000f64.powf(-2.0 * k as f64 / dim as f64);
        let x = t as f64 * w;
        e[2 * k] = x.sin();
        if 2 * k + 1 < dim {
            e[2 * k + 1] = x.cos();
        }
    }
    e
}

/// Deterministic part of the reverse step:
/// `(z_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)`.
pub fn reverse_mean(z_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if eps_hat.len() != z_t.len() {
        return Err(invalid("predicted noise and latent differ in length"));
    }
    let (b, a, ab) = (sched.beta(t), sched.alpha(t), sched.alpha_bar(t));
    // with beta_t = 0 the coefficient is 0/0 in the limit; the step is an identity
    let coef = if b == 0.0 { 0.0 } else { b / (1.0 - ab).sqrt() };
    let inv = 1.0 / a.sqrt();
    Ok(z_t.iter().zip(eps_hat).map(|(&z, &e)| inv * (z - coef * e)).collect())
}

/// One reverse step with `sigma_t = sqrt(beta_t)`; the noise term is omitted
/// at `t = 1` so the final refinement is deterministic.
pub fn reverse_step<R: Rng + ?Sized>(
    z_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut z = reverse_mean(z_t, eps_hat, t, sched)?;
    if t > 1 {
        let sigma = sched.beta(t).sqrt();
        for v in z.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += sigma * e;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uasim_core::rng::stream_rng;

    #[test]
    fn forward_limits() {
        let zero = NoiseSchedule::from_betas(vec![0.0; 5]).unwrap();
        let z0 = [0.3, -1.2];
        assert_eq!(forward_sample(&z0, 5, &[0.7, 0.1], &zero).unwrap(), z0.to_vec());
        let s = NoiseSchedule::default();
        let z = forward_sample(&z0, 40, &[0.0, 0.0], &s).unwrap();
        let a = s.alpha_bar(40).sqrt();
        assert_eq!(z, vec![a * 0.3, a * -1.2]);
        assert!(forward_sample(&z0, 0, &[0.0, 0.0], &s).is_err());
        assert!(forward_sample(&z0, 1, &[0.0], &s).is_err());
    }

    #[test]
    fn iterated_identity_with_zero_betas() {
        let zero = NoiseSchedule::from_betas(vec![0.0; 7]).unwrap();
        let z0 = vec![1.0, 2.0, -3.0];
        let mut rng = stream_rng(0, 0);
        for t in 1..=7 {
            assert_eq!(iterated_forward(&z0, t, &mut rng, &zero).unwrap(), z0);
        }
    }

    #[test]
    fn embedding_convention() {
        let e = time_embedding(3, 32);
        assert_eq!(e[0], 3f64.sin());
        assert_eq!(e[1], 3f64.cos());
        assert!((e[2] - (3.0 * 10_000f64.powf(-2.0 / 32.0)).sin()).abs() < 1e-15);
        for t in 1..=100 {
            assert!(time_embedding(t, 32).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn embeddings_are_distinct() {
        let all: Vec<Vec<f64>> = (1..=100).map(|t| time_embedding(t, 32)).collect();
        let mut min = f64::INFINITY;
        for i in 0..100 {
            for j in i + 1..100 {
                let d: f64 = all[i].iter().zip(&all[j]).map(|(a, b)| (a - b).powi(2)).sum();
                min = min.min(d.sqrt());
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn reverse_step_algebra() {
        let s = NoiseSchedule::default();
        let z = vec![0.5, -0.25];
        let mut rng = stream_rng(0, 0);
        let out = reverse_step(&z, &[0.0, 0.0], 1, &s, &mut rng).unwrap();
        let a = s.alpha(1).sqrt();
        assert_eq!(out, vec![0.5 / a, -0.25 / a]);

        let zero = NoiseSchedule::from_betas(vec![0.0; 3]).unwrap();
        assert_eq!(reverse_step(&z, &[0.9, 0.9], 3, &zero, &mut rng).unwrap(), z);
    }

    #[test]
    fn single_step_recovers_z0() {
        let s = NoiseSchedule::linear(1, 1e-4, 1e-2).unwrap();
        let z0 = vec![1.5, -0.7, 0.2];
        let eps = vec![0.3, 1.1, -2.0];
        let zt = forward_sample(&z0, 1, &eps, &s).unwrap();
        let back = reverse_step(&zt, &eps, 1, &s, &mut stream_rng(0, 0)).unwrap();
        for (a, b) in back.iter().zip(&z0) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
