//! Seeded synthetic spectra with averaged-periodogram noise.
//!
//! Each bin i is multiplied by X_i ~ Gamma(shape n_avg, scale 1/n_avg), the
//! exact law of the mean of n_avg exponential periodogram ordinates.
//!
//! Generator contract (fixed, so other implementations can reproduce output
//! bit for bit):
//!
//! * Bin i uses ChaCha8 keyed by `seed` as expanded by `seed_from_u64`
//!   (PCG32 key expansion), with stream id `i` and block counter 0.
//! * Uniforms take the top 53 bits of `next_u64`: u = ((x >> 11) + 0.5)·2⁻⁵³,
//!   which never returns 0 or 1.
//! * Normals are the cosine branch of Box–Muller, one per pair of uniforms:
//!   z = √(−2 ln u₁)·cos(2πu₂).
//! * Gamma draws use Marsaglia–Tsang with d = n_avg − 1/3, c = 1/√(9d): draw
//!   z, set v = (1 + cz)³, retry if 1 + cz ≤ 0; draw u; accept if
//!   u < 1 − 0.0331z⁴ or ln u < z²/2 + d(1 − v + ln v); return d·v/n_avg.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::spectra::{output_noise_spectrum, GridSpec, ModelParams, SpectrumTrace};

/// Fewest grid points accepted for a synthetic trace.
pub const MIN_SYNTH_POINTS: usize = 32;

/// Averaging, seed and frequency grid of a synthetic measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub n_avg: u64,
    pub seed: u64,
    pub grid: GridSpec,
}

impl NoiseConfig {
    pub fn new(n_avg: u64, seed: u64, grid: GridSpec) -> Result<Self> {
        let c = Self { n_avg, seed, grid };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_avg < 1 {
            return Err(Error::domain("n_avg must be at least 1"));
        }
        if self.grid.points < MIN_SYNTH_POINTS {
            return Err(Error::domain(format!(
                "synthetic traces need at least {MIN_SYNTH_POINTS} points, got {}",
                self.grid.points
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
}

/// One Gamma(shape, 1) draw for shape ≥ 1.
fn gamma(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = normal(rng);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = uniform(rng);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Multiplicative noise factor for bin `index`: mean 1, variance 1/n_avg.
pub fn noise_factor(seed: u64, index: u64, n_avg: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let shape = n_avg as f64;
    gamma(&mut rng, shape) / shape
}

/// Applies averaged-periodogram noise to a noiseless trace.
pub fn add_noise(trace: &SpectrumTrace, n_avg: u64, seed: u64) -> Result<SpectrumTrace> {
    if n_avg < 1 {
        return Err(Error::domain("n_avg must be at least 1"));
    }
    let values: Vec<f64> = trace
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, v)| v * noise_factor(seed, i as u64, n_avg))
        .collect();
    let mut out = trace.with_values(values, trace.unit())?;
    out.meta.n_avg = Some(n_avg);
    out.meta.seed = Some(seed);
    Ok(out)
}

/// Noisy output spectrum (quanta) for `params` on the configured grid.
pub fn generate_spectrum(params: &ModelParams, noise: &NoiseConfig) -> Result<SpectrumTrace> {
    noise.validate()?;
    let grid = noise.grid.build()?;
    let clean = output_noise_spectrum(&grid, params)?;
    add_noise(&clean, noise.n_avg, noise.seed)
}
