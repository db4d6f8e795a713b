//! Noise schedules `beta_t`, `alpha_t = 1 - beta_t`, `alpha_bar_t = prod alpha_s`.
//! Steps are numbered `1..=T`; index `t - 1` in the vectors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Sigmoid,
    /// Explicit betas (testing and special cases).
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

/// Sigmoid schedule value at fraction `t / T`:
/// `beta_min + (beta_max - beta_min) / (1 + exp(-10 (frac - 0.5)))`.
pub fn sigmoid_beta(frac: f64, beta_min: f64, beta_max: f64) -> f64 {
    beta_min + (beta_max - beta_min) / (1.0 + (-10.0 * (frac - 0.5)).exp())
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("a schedule needs at least one step"));
        }
        if !(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0) {
            return Err(invalid(format!("need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")));
        }
        let beta: Vec<f64> = match kind {
            ScheduleKind::Linear if steps == 1 => vec![beta_min],
            ScheduleKind::Linear => (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect(),
            ScheduleKind::Sigmoid => {
                (1..=steps).map(|t| sigmoid_beta(t as f64 / steps as f64, beta_min, beta_max)).collect()
            }
            ScheduleKind::Custom => return Err(invalid("use from_betas for explicit schedules")),
        };
        let mut s = Self::from_betas(beta)?;
        s.kind = kind;
        s.beta_min = beta_min;
        s.beta_max = beta_max;
        Ok(s)
    }

    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, steps, beta_min, beta_max)
    }

    pub fn sigmoid(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        Self::new(ScheduleKind::Sigmoid, steps, beta_min, beta_max)
    }

    /// A schedule from explicit betas in `[0, 1)`. Zero betas are allowed
    /// here (identity steps) even though trained schedules keep them positive.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(invalid("betas must be non-empty and lie in [0, 1)"));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let (lo, hi) = beta.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &b| (l.min(b), h.max(b)));
        Ok(Self { kind: ScheduleKind::Custom, beta_min: lo, beta_max: hi, beta, alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(100, 1e-4, 1e-2).expect("valid defaults")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_endpoints() {
        let s = NoiseSchedule::linear(100, 1e-4, 1e-2).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(100), 1e-2);
        let one = NoiseSchedule::linear(1, 1e-4, 1e-2).unwrap();
        assert_eq!(one.beta(1), 1e-4);
        assert_eq!(one.alpha_bar(1), 1.0 - 1e-4);
    }

    #[test]
    fn sigmoid_midpoint() {
        assert!((sigmoid_beta(0.5, 1e-4, 1e-2) - 5.05e-3).abs() < 1e-15);
        let s = NoiseSchedule::sigmoid(100, 1e-4, 1e-2).unwrap();
        assert_eq!(s.beta(50), sigmoid_beta(0.5, 1e-4, 1e-2));
    }

    #[test]
    fn alpha_bar_is_decreasing_product() {
        for s in [NoiseSchedule::linear(100, 1e-4, 1e-2).unwrap(), NoiseSchedule::sigmoid(100, 1e-4, 1e-2).unwrap()] {
            let mut prod = 1.0;
            for t in 1..=100 {
                prod *= 1.0 - s.beta(t);
                assert!((s.alpha_bar(t) - prod).abs() < 1e-12);
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                if t > 1 {
                    assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::linear(0, 1e-4, 1e-2).is_err());
        assert!(NoiseSchedule::linear(10, 1e-2, 1e-4).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 1e-2).is_err());
        assert!(NoiseSchedule::sigmoid(10, 1e-4, 1.0).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.1, 1.0]).is_err());
        let s = NoiseSchedule::default();
        assert!(s.check_step(0).is_err() && s.check_step(101).is_err() && s.check_step(100).is_ok());
    }
}
