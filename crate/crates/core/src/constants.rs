//! Physical constants (CODATA 2018, exact SI values where defined).

use std::f64::consts::PI;

/// Planck constant h (J s), exact.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Reduced Planck constant ħ = h/2π (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Boltzmann constant k_B (J/K), exact.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// 2π, used for every Hz <-> rad/s conversion.
pub const TWO_PI: f64 = 2.0 * PI;

/// Converts an ordinary frequency (Hz) to an angular rate (rad/s).
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

/// Converts an angular rate (rad/s) to an ordinary frequency (Hz).
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hbar_matches_codata() {
        // CODATA 2018: 1.054 571 817... e-34 J s
        assert!((HBAR - 1.054_571_817e-34).abs() / HBAR < 1e-9);
    }

    #[test]
    fn hz_rad_round_trip() {
        let f = 10.56e6;
        assert_eq!(rad_to_hz(hz_to_rad(f)), f);
    }
}
