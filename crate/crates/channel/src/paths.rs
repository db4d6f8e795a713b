//! Isovelocity image-source multipath model.
//!
//! With surface at depth 0 and a flat bottom at depth `d`, every ray that
//! bounces between the two boundaries unfolds into a straight line to an
//! image of the source. For order `m = 0, 1, ...` the four image families
//! have vertical separations
//!
//! ```text
//! |2md + zr - zs|        m surface, m bottom bounces
//!  2md + zr + zs         m+1 surface, m bottom
//!  2(m+1)d - zr - zs     m surface, m+1 bottom
//!  2(m+1)d + zs - zr     m+1 surface, m+1 bottom
//! ```
//!
//! All bottom bounces of one path share the grazing angle `atan(dz / r)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{invalid, Result};
use crate::reflection::rayleigh_reflection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Travel time, s.
    pub delay: f64,
    pub complex_gain: Complex64,
    pub surface_bounces: u32,
    pub bottom_bounces: u32,
    /// rad
    pub grazing_angle_bottom: f64,
    /// Unfolded path length, m.
    pub length: f64,
}

/// Arrivals sorted by delay; the first is the direct path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn first_delay(&self) -> f64 {
        self.paths.first().map_or(0.0, |p| p.delay)
    }
}

/// All arrivals with at most `max_bounces` boundary interactions and a delay
/// no more than `max_delay` seconds after the direct path.
pub fn nominal_cir(env: &Environment, max_delay: f64, max_bounces: u32) -> Result<PathSet> {
    env.validate()?;
    if !(max_delay > 0.0) {
        return Err(invalid(format!("max_delay must be positive, got {max_delay}")));
    }
    let (d, zs, zr, r, c) =
        (env.water_depth, env.source_depth, env.receiver_depth, env.range, env.surface_sound_speed);
    let direct_len = r.hypot(zr - zs);
    let limit = direct_len / c + max_delay;
    let kappa = -env.surface_reflection_coeff;
    let mut paths = Vec::new();
    let mut push = |dz: f64, s: u32, b: u32| -> Result<()> {
        if s + b > max_bounces {
            return Ok(());
        }
        let len = r.hypot(dz);
        let delay = len / c;
        if delay > limit {
            return Ok(());
        }
        let grazing = dz.abs().atan2(r);
        let mut gain = Complex64::from(kappa.powi(s as i32) / len.max(f64::MIN_POSITIVE));
        if b > 0 {
            let rb = rayleigh_reflection(grazing, env.relative_density, env.relative_sound_speed, env.absorption)?;
            gain *= rb.powu(b);
        }
        paths.push(Path {
            delay,
            complex_gain: gain,
            surface_bounces: s,
            bottom_bounces: b,
            grazing_angle_bottom: grazing,
            length: len,
        });
        Ok(())
    };
    let mut m: u32 = 0;
    loop {
        let md = 2.0 * m as f64 * d;
        // every family at this order is at least this far vertically
        let floor = (md - d).max(0.0);
        if (m > 0 && r.hypot(floor) / c > limit) || 2 * m > max_bounces {
            break;
        }
        push((md + zr - zs).abs(), m, m)?;
        push(md + zr + zs, m + 1, m)?;
        push(md + 2.0 * d - zr - zs, m, m + 1)?;
        push(md + 2.0 * d + zs - zr, m + 1, m + 1)?;
        m += 1;
    }
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(PathSet { paths })
}
