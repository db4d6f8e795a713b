//! Plane-wave reflection from a fluid half-space bottom.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Rayleigh reflection coefficient of a fluid bottom.
///
/// The bottom has density `relative_density` and complex sound speed
/// `relative_sound_speed / (1 + i absorption)` relative to the water, so its
/// relative refractive index is `n = (1 + i absorption) / relative_sound_speed`.
/// With grazing angle `g`,
/// `R = (rho sin g - sqrt(n^2 - cos^2 g)) / (rho sin g + sqrt(n^2 - cos^2 g))`.
pub fn rayleigh_reflection(
    grazing_angle: f64,
    relative_density: f64,
    relative_sound_speed: f64,
    absorption: f64,
) -> Result<Complex64> {
    if !(relative_sound_speed > 0.0) {
        return Err(invalid(format!("relative sound speed must be positive, got {relative_sound_speed}")));
    }
    if !(grazing_angle > 0.0 && grazing_angle <= std::f64::consts::FRAC_PI_2) {
        return Err(invalid(format!("grazing angle {grazing_angle} outside (0, pi/2]")));
    }
    if !(relative_density > 0.0) || !(absorption >= 0.0) {
        return Err(invalid("density must be positive and absorption non-negative"));
    }
    let n = Complex64::new(1.0, absorption) / relative_sound_speed;
    let cos_g = grazing_angle.cos();
    let root = (n * n - cos_g * cos_g).sqrt();
    let z = Complex64::from(relative_density * grazing_angle.sin());
    Ok((z - root) / (z + root))
}
