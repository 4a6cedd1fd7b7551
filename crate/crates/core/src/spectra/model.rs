use num_complex::Complex64;

use super::{detunings, ModelParams, SpectrumTrace, TraceMeta, Unit};
use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Which optomechanical self-energy to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelfEnergyForm {
    /// Both sidebands: −jg²[χ_c(δ) − χ_c*(δ + 2Ω_m)].
    Exact { omega_m: f64 },
    /// Drops the counter-rotating cavity response: −jg²χ_c(δ).
    ResolvedSideband,
}

/// Cavity response χ_c = 1/(κ/2 + j(δ + Δ̃)).
pub fn cavity_susceptibility(delta: f64, kappa: f64, delta_tilde: f64) -> Complex64 {
    1.0 / Complex64::new(kappa / 2.0, delta + delta_tilde)
}

/// Bare mechanical response χ_m = 1/(Γ_m/2 + jδ).
pub fn mech_susceptibility(delta: f64, gamma_m: f64) -> Complex64 {
    1.0 / Complex64::new(gamma_m / 2.0, delta)
}

/// Optomechanical self-energy Σ(δ) in rad/s.
pub fn self_energy(
    delta: f64,
    g: f64,
    kappa: f64,
    delta_tilde: f64,
    form: SelfEnergyForm,
) -> Complex64 {
    let chi = cavity_susceptibility(delta, kappa, delta_tilde);
    let g2 = g * g;
    match form {
        SelfEnergyForm::ResolvedSideband => -J * g2 * chi,
        SelfEnergyForm::Exact { omega_m } => {
            let counter = cavity_susceptibility(delta + 2.0 * omega_m, kappa, delta_tilde).conj();
            -J * g2 * (chi - counter)
        }
    }
}

/// Dressed mechanical response χ̃_m = χ_m / (1 + jχ_mΣ).
pub fn dressed_mech_susceptibility(
    delta: f64,
    params: &ModelParams,
    form: SelfEnergyForm,
) -> Result<Complex64> {
    let chi_m = mech_susceptibility(delta, params.gamma_m);
    let sigma = self_energy(delta, params.g, params.kappa, params.delta_tilde, form);
    let denom = 1.0 + J * chi_m * sigma;
    if !(denom.norm() > f64::MIN_POSITIVE) || !denom.is_finite() {
        return Err(Error::UnstablePole { growth_rate: 0.0 });
    }
    Ok(chi_m / denom)
}

/// Checks that both normal modes of the coupled system decay.
///
/// The poles of the output spectrum are the roots in s = jδ of
/// 4s² + 2s(κ + Γ_m + 2jΔ̃) + (κ + 2jΔ̃)Γ_m + 4g² = 0.
pub fn check_stability(params: &ModelParams) -> Result<()> {
    params.validate()?;
    let kc = Complex64::new(params.kappa, 2.0 * params.delta_tilde);
    let b = 2.0 * (kc + params.gamma_m);
    let c = kc * params.gamma_m + 4.0 * params.g * params.g;
    let disc = (b * b - 16.0 * c).sqrt();
    let growth = ((-b + disc) / 8.0).re.max(((-b - disc) / 8.0).re);
    if growth >= 0.0 {
        return Err(Error::UnstablePole {
            growth_rate: growth,
        });
    }
    Ok(())
}

/// Output noise S/ħω at offset δ (no validation; see [`output_noise_spectrum`]).
///
/// S/ħω = 1/2 + n_add' + 4βκ_ex[κn_c(Γ_m² + 4δ²) + 4Γ_m n_m^T g²]
///        / |4g² + (κ + 2j(δ + Δ̃))(Γ_m + 2jδ)|²
#[inline]
pub fn output_noise_density(delta: f64, p: &ModelParams) -> f64 {
    let cav = Complex64::new(p.kappa, 2.0 * (delta + p.delta_tilde));
    let mech = Complex64::new(p.gamma_m, 2.0 * delta);
    let denom = (4.0 * p.g * p.g + cav * mech).norm_sqr();
    let numer = p.kappa * p.n_c * (p.gamma_m * p.gamma_m + 4.0 * delta * delta)
        + 4.0 * p.gamma_m * p.n_m_t * p.g * p.g;
    p.floor() + 4.0 * p.beta * p.kappa_ex * numer / denom
}

/// Full output noise spectrum in quanta, valid in weak and strong coupling.
pub fn output_noise_spectrum(freq_hz: &[f64], params: &ModelParams) -> Result<SpectrumTrace> {
    check_stability(params)?;
    let values = detunings(freq_hz, params.omega_m)
        .into_iter()
        .map(|d| output_noise_density(d, params))
        .collect();
    let meta = TraceMeta {
        warnings: params.warnings(),
        ..TraceMeta::default()
    };
    SpectrumTrace::new(freq_hz.to_vec(), values, Unit::Quanta, meta)
}

/// Lorentzian weak-coupling limit of the output spectrum:
/// S/ħω = 1/2 + n_add' + 4β(κ_ex/κ)·ΓΓ_m n_m^T / ((Γ_m + Γ)² + 4δ²), Γ = 4g²/κ.
///
/// Outside its validity range (Δ̃ ≠ 0, n_c not ≪ n_m^T, 4g² ≥ 10³κΓ_m or
/// |δ| ≥ κ/10 on the grid) the trace is still produced, with warnings in its
/// metadata.
pub fn weak_coupling_spectrum(freq_hz: &[f64], params: &ModelParams) -> Result<SpectrumTrace> {
    params.validate()?;
    let p = params;
    let gamma = p.gamma_opt();
    let width = p.gamma_m + gamma;
    let amp = 4.0 * p.beta * (p.kappa_ex / p.kappa) * gamma * p.gamma_m * p.n_m_t;
    let deltas = detunings(freq_hz, p.omega_m);
    let values = deltas
        .iter()
        .map(|d| p.floor() + amp / (width * width + 4.0 * d * d))
        .collect();

    let mut warnings = p.warnings();
    if p.delta_tilde.abs() > 1e-9 * p.kappa {
        warnings.push(format!(
            "weak-coupling form assumes delta_tilde = 0, got {:e} rad/s",
            p.delta_tilde
        ));
    }
    if p.n_c > 0.1 * p.n_m_t {
        warnings.push(format!(
            "weak-coupling form assumes n_c << n_m_T (n_c = {}, n_m_T = {})",
            p.n_c, p.n_m_t
        ));
    }
    if 4.0 * p.g * p.g >= 1e3 * p.kappa * p.gamma_m {
        warnings.push(
            "coupling too strong for the weak-coupling form (4g^2 >= 1e3 kappa gamma_m)".into(),
        );
    }
    let max_offset = deltas.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if max_offset >= p.kappa / 10.0 {
        warnings.push(format!(
            "grid reaches |delta| = {max_offset:e} rad/s >= kappa/10"
        ));
    }
    let meta = TraceMeta {
        warnings,
        ..TraceMeta::default()
    };
    SpectrumTrace::new(freq_hz.to_vec(), values, Unit::Quanta, meta)
}
