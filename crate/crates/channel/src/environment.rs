//! Random shallow-water environments.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ChannelError, Result};

/// Closest a source or receiver may sit to the surface or the bottom.
pub const BOUNDARY_CLEARANCE: f64 = 2.5;

/// One sampled propagation environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// m/s
    pub surface_sound_speed: f64,
    /// 1/s. Recorded only; the isovelocity path model ignores it.
    pub sound_speed_gradient: f64,
    /// m
    pub water_depth: f64,
    /// m
    pub source_depth: f64,
    /// m
    pub receiver_depth: f64,
    /// Horizontal source-receiver distance, m.
    pub range: f64,
    /// Bottom-to-water density ratio.
    pub relative_density: f64,
    /// Bottom-to-water sound speed ratio.
    pub relative_sound_speed: f64,
    /// Bottom loss parameter (imaginary part of the bottom's complex speed).
    pub absorption: f64,
    /// Magnitude of the surface reflection coefficient.
    pub surface_reflection_coeff: f64,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.surface_sound_speed,
            self.sound_speed_gradient,
            self.water_depth,
            self.source_depth,
            self.receiver_depth,
            self.range,
            self.relative_density,
            self.relative_sound_speed,
            self.absorption,
            self.surface_reflection_coeff,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("environment has non-finite fields"));
        }
        if self.surface_sound_speed <= 0.0 || self.range < 0.0 || self.water_depth <= 0.0 {
            return Err(invalid("sound speed, depth and range must be positive"));
        }
        for (what, z) in [("source", self.source_depth), ("receiver", self.receiver_depth)] {
            if !(0.0..=self.water_depth).contains(&z) {
                return Err(invalid(format!(
                    "{what} depth {z} m is outside the {} m water column",
                    self.water_depth
                )));
            }
        }
        Ok(())
    }
}

/// Sampling distributions for each field. Depth ranges for the source and
/// receiver are always `[2.5, d - 2.5]` for the sampled depth `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentRanges {
    pub surface_sound_speed: [f64; 2],
    /// Mean and standard deviation of a normal.
    pub sound_speed_gradient: [f64; 2],
    pub water_depth: [f64; 2],
    pub range: [f64; 2],
    pub relative_density: [f64; 2],
    pub relative_sound_speed: [f64; 2],
    pub absorption: [f64; 2],
    pub surface_reflection_coeff: [f64; 2],
}

impl Default for EnvironmentRanges {
    fn default() -> Self {
        Self {
            surface_sound_speed: [1500.0, 1550.0],
            sound_speed_gradient: [0.0, 0.05],
            water_depth: [10.0, 100.0],
            range: [1.0, 1000.0],
            relative_density: [1.145, 2.5],
            relative_sound_speed: [0.98, 2.5],
            absorption: [0.0, 0.0022],
            surface_reflection_coeff: [0.5, 1.0],
        }
    }
}

fn uniform(lo_hi: [f64; 2], what: &str) -> Result<Uniform<f64>> {
    let [lo, hi] = lo_hi;
    Uniform::new_inclusive(lo, hi).map_err(|_| ChannelError::Config(format!("bad range for {what}: [{lo}, {hi}]")))
}

impl EnvironmentRanges {
    pub fn validate(&self) -> Result<()> {
        let uniforms = [
            ("surface_sound_speed", self.surface_sound_speed),
            ("water_depth", self.water_depth),
            ("range", self.range),
            ("relative_density", self.relative_density),
            ("relative_sound_speed", self.relative_sound_speed),
            ("absorption", self.absorption),
            ("surface_reflection_coeff", self.surface_reflection_coeff),
        ];
        for (what, r) in uniforms {
            uniform(r, what)?;
        }
        if self.water_depth[0] < 2.0 * BOUNDARY_CLEARANCE {
            return Err(ChannelError::Config(format!(
                "water depth must be at least {} m",
                2.0 * BOUNDARY_CLEARANCE
            )));
        }
        if self.surface_sound_speed[0] <= 0.0 || self.relative_sound_speed[0] <= 0.0 || self.absorption[0] < 0.0 {
            return Err(ChannelError::Config("sound speeds must be positive and absorption non-negative".into()));
        }
        if self.range[0] < 0.0 {
            return Err(ChannelError::Config("range must be non-negative".into()));
        }
        let [_, sd] = self.sound_speed_gradient;
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(ChannelError::Config(format!("bad gradient std {sd}")));
        }
        Ok(())
    }

    /// Draws every field independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Environment> {
        self.validate()?;
        let surface_sound_speed = uniform(self.surface_sound_speed, "surface_sound_speed")?.sample(rng);
        let [mean, sd] = self.sound_speed_gradient;
        let sound_speed_gradient = Normal::new(mean, sd).expect("validated").sample(rng);
        let water_depth = uniform(self.water_depth, "water_depth")?.sample(rng);
        let depths = uniform([BOUNDARY_CLEARANCE, water_depth - BOUNDARY_CLEARANCE], "depth")?;
        let source_depth = depths.sample(rng);
        let receiver_depth = depths.sample(rng);
        let env = Environment {
            surface_sound_speed,
            sound_speed_gradient,
            water_depth,
            source_depth,
            receiver_depth,
            range: uniform(self.range, "range")?.sample(rng),
            relative_density: uniform(self.relative_density, "relative_density")?.sample(rng),
            relative_sound_speed: uniform(self.relative_sound_speed, "relative_sound_speed")?.sample(rng),
            absorption: uniform(self.absorption, "absorption")?.sample(rng),
            surface_reflection_coeff: uniform(self.surface_reflection_coeff, "surface_reflection_coeff")?
                .sample(rng),
        };
        env.validate()?;
        Ok(env)
    }
}

/// Draws an environment from the default distributions.
pub fn sample_environment<R: Rng + ?Sized>(rng: &mut R) -> Environment {
    EnvironmentRanges::default().sample(rng).expect("default ranges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use uasim_core::rng::stream_rng;

    #[test]
    fn draws_respect_ranges() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..10_000 {
            let e = sample_environment(&mut rng);
            assert!((1500.0..=1550.0).contains(&e.surface_sound_speed));
            assert!((10.0..=100.0).contains(&e.water_depth));
            for z in [e.source_depth, e.receiver_depth] {
                assert!(z >= 2.5 && z <= e.water_depth - 2.5);
            }
            assert!((0.5..=1.0).contains(&e.surface_reflection_coeff));
        }
    }

    #[test]
    fn shallowest_water_limits_depths() {
        let ranges = EnvironmentRanges { water_depth: [10.0, 10.0], ..Default::default() };
        let mut rng = stream_rng(2, 0);
        for _ in 0..1000 {
            let e = ranges.sample(&mut rng).unwrap();
            assert!((2.5..=7.5).contains(&e.source_depth));
            assert!((2.5..=7.5).contains(&e.receiver_depth));
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let r = EnvironmentRanges { water_depth: [4.0, 10.0], ..Default::default() };
        assert!(r.validate().is_err());
        let r = EnvironmentRanges { range: [10.0, 1.0], ..Default::default() };
        assert!(r.validate().is_err());
        let mut e = sample_environment(&mut stream_rng(0, 0));
        e.source_depth = e.water_depth + 1.0;
        assert!(e.validate().is_err());
    }
}
