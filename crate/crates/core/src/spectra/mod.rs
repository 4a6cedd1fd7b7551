//! Frequency-domain forward models and the spectrum container.
//!
//! All spectral densities are single-sided: ⟨A²⟩ = ∫₀^∞ S_A(ω) dω/2π, so an
//! area taken over an axis in Hz is directly a mean-square value. Spectrum
//! axes hold the detected sideband frequency relative to the drive (near
//! Ω_m/2π), and the model offset is δ = 2πf − Ω_m.

mod csv;
mod displacement;
mod model;
mod peak;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{hz_to_rad, rad_to_hz, HBAR};
use crate::device::DeviceParams;
use crate::dynamics::{coupling_rate, ThermalState};
use crate::error::{Error, Result};

pub use csv::{read_trace, read_trace_file, write_trace, write_trace_file};
pub use displacement::{
    displacement_from_output, output_drive_power, sideband_output_power, thermal_displacement_psd,
};
pub use model::{
    cavity_susceptibility, check_stability, dressed_mech_susceptibility, mech_susceptibility,
    output_noise_density, output_noise_spectrum, self_energy, weak_coupling_spectrum,
    SelfEnergyForm,
};
pub(crate) use peak::leftmost_max;
pub use peak::{integrate_mech_peak, peak_area, PeakArea, ZeroPoint, MIN_PEAK_SNR};

/// Minimum number of samples in a trace.
pub const MIN_TRACE_LEN: usize = 8;

/// Unit of the values in a [`SpectrumTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// S/ħω: noise quanta referred to the detected frequency.
    Quanta,
    /// S in W/Hz.
    WattsPerHz,
    /// Displacement PSD S_x in m²/Hz.
    M2PerHz,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Quanta => "quanta",
            Unit::WattsPerHz => "watts_per_hz",
            Unit::M2PerHz => "m2_per_hz",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quanta" => Ok(Unit::Quanta),
            "watts_per_hz" => Ok(Unit::WattsPerHz),
            "m2_per_hz" => Ok(Unit::M2PerHz),
            other => Err(Error::InvalidTrace(format!("unknown unit `{other}`"))),
        }
    }
}

/// Acquisition metadata carried alongside a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device: Option<String>,
    /// Free-form record of the drive (detuning, strength).
    pub drive: Option<String>,
    /// Number of averaged periodograms.
    pub n_avg: Option<u64>,
    pub seed: Option<u64>,
    /// Model-validity warnings raised while producing the trace.
    pub warnings: Vec<String>,
    /// Any other `key=value` metadata.
    pub extra: BTreeMap<String, String>,
}

/// A power spectral density sampled on a strictly increasing frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    freq_hz: Vec<f64>,
    values: Vec<f64>,
    unit: Unit,
    pub meta: TraceMeta,
}

impl SpectrumTrace {
    pub fn new(freq_hz: Vec<f64>, values: Vec<f64>, unit: Unit, meta: TraceMeta) -> Result<Self> {
        if freq_hz.len() != values.len() {
            return Err(Error::InvalidTrace(format!(
                "axis has {} points but {} values",
                freq_hz.len(),
                values.len()
            )));
        }
        if freq_hz.len() < MIN_TRACE_LEN {
            return Err(Error::InvalidTrace(format!(
                "need at least {MIN_TRACE_LEN} points, got {}",
                freq_hz.len()
            )));
        }
        if freq_hz.iter().any(|f| !f.is_finite()) || freq_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(
                "frequency axis must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace("values must be finite".into()));
        }
        if unit != Unit::M2PerHz && values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidTrace(format!(
                "{unit} values must be non-negative"
            )));
        }
        Ok(Self {
            freq_hz,
            values,
            unit,
            meta,
        })
    }

    pub fn freq_hz(&self) -> &[f64] {
        &self.freq_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same axis and metadata with new values (validated).
    pub fn with_values(&self, values: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::new(self.freq_hz.clone(), values, unit, self.meta.clone())
    }

    /// Quanta → W/Hz using the photon energy ħω at `omega_ref`.
    pub fn to_watts_per_hz(&self, omega_ref: f64) -> Result<Self> {
        self.expect_unit(Unit::Quanta)?;
        let e = HBAR * omega_ref;
        self.with_values(
            self.values.iter().map(|v| v * e).collect(),
            Unit::WattsPerHz,
        )
    }

    /// W/Hz → quanta using the photon energy ħω at `omega_ref`.
    pub fn to_quanta(&self, omega_ref: f64) -> Result<Self> {
        self.expect_unit(Unit::WattsPerHz)?;
        let e = HBAR * omega_ref;
        self.with_values(self.values.iter().map(|v| v / e).collect(), Unit::Quanta)
    }

    pub(crate) fn expect_unit(&self, expected: Unit) -> Result<()> {
        if self.unit != expected {
            return Err(Error::UnitMismatch {
                expected,
                found: self.unit,
            });
        }
        Ok(())
    }
}

/// Names of the spectral model parameters that a fit may free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "g")]
    G,
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "delta_tilde")]
    DeltaTilde,
    #[serde(rename = "gamma_m")]
    GammaM,
    #[serde(rename = "n_m_T")]
    NmT,
    #[serde(rename = "n_c")]
    Nc,
    #[serde(rename = "n_add_eff")]
    NAddEff,
}

impl ParamName {
    pub const ALL: [ParamName; 7] = [
        ParamName::G,
        ParamName::Kappa,
        ParamName::DeltaTilde,
        ParamName::GammaM,
        ParamName::NmT,
        ParamName::Nc,
        ParamName::NAddEff,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::G => "g",
            ParamName::Kappa => "kappa",
            ParamName::DeltaTilde => "delta_tilde",
            ParamName::GammaM => "gamma_m",
            ParamName::NmT => "n_m_T",
            ParamName::Nc => "n_c",
            ParamName::NAddEff => "n_add_eff",
        }
    }

    /// Everything except the detuning offset must stay positive.
    pub fn is_positive(&self) -> bool {
        !matches!(self, ParamName::DeltaTilde)
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::FitSetup(format!("unknown model parameter `{s}`")))
    }
}

/// Parameters of the full output noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Coupling rate g (rad/s).
    pub g: f64,
    /// Total cavity linewidth κ (rad/s).
    pub kappa: f64,
    /// External coupling κ_ex (rad/s).
    pub kappa_ex: f64,
    /// Intrinsic mechanical linewidth Γ_m (rad/s).
    pub gamma_m: f64,
    /// Detuning from the red sideband, Δ̃ = ω_d + Ω_m − ω_c (rad/s).
    pub delta_tilde: f64,
    /// Mechanical bath occupancy.
    pub n_m_t: f64,
    /// Cavity occupancy.
    pub n_c: f64,
    /// Effective added noise of the detection chain, loss included.
    pub n_add_eff: f64,
    /// Output geometry factor.
    pub beta: f64,
    /// Mechanical resonance Ω_m (rad/s); sets where δ = 0 sits on the axis.
    pub omega_m: f64,
}

impl ModelParams {
    /// Model for `device` driven on the red sideband with `n_d` photons.
    pub fn from_device(
        device: &DeviceParams,
        n_d: f64,
        thermal: &ThermalState,
        n_add_eff: f64,
    ) -> Result<Self> {
        let p = Self {
            g: coupling_rate(&device.coupling, &device.mech, n_d)?,
            kappa: device.cavity.kappa(),
            kappa_ex: device.cavity.kappa_ex(),
            gamma_m: device.mech.gamma_m(),
            delta_tilde: 0.0,
            n_m_t: thermal.n_m_t,
            n_c: thermal.n_c,
            n_add_eff,
            beta: device.cavity.beta(),
            omega_m: device.mech.omega_m(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::G => self.g,
            ParamName::Kappa => self.kappa,
            ParamName::DeltaTilde => self.delta_tilde,
            ParamName::GammaM => self.gamma_m,
            ParamName::NmT => self.n_m_t,
            ParamName::Nc => self.n_c,
            ParamName::NAddEff => self.n_add_eff,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::G => self.g = value,
            ParamName::Kappa => self.kappa = value,
            ParamName::DeltaTilde => self.delta_tilde = value,
            ParamName::GammaM => self.gamma_m = value,
            ParamName::NmT => self.n_m_t = value,
            ParamName::Nc => self.n_c = value,
            ParamName::NAddEff => self.n_add_eff = value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.g,
            self.kappa,
            self.kappa_ex,
            self.gamma_m,
            self.delta_tilde,
            self.n_m_t,
            self.n_c,
            self.n_add_eff,
            self.beta,
            self.omega_m,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::domain("model parameters must be finite"));
        }
        if !(self.kappa > 0.0 && self.gamma_m > 0.0 && self.omega_m > 0.0 && self.g >= 0.0) {
            return Err(Error::domain(
                "kappa, gamma_m and omega_m must be positive and g non-negative",
            ));
        }
        if !(self.kappa_ex > 0.0 && self.kappa_ex <= self.kappa) {
            return Err(Error::domain("kappa_ex must lie in (0, kappa]"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::domain("beta must lie in (0, 1]"));
        }
        if !(self.n_m_t >= 0.0 && self.n_c >= 0.0 && self.n_add_eff >= 0.0) {
            return Err(Error::domain("occupancies must be non-negative"));
        }
        Ok(())
    }

    /// Advisory notes about parameter values that are legal but suspicious.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.n_add_eff < 0.5 {
            w.push(format!(
                "n_add_eff = {} is below the two-quadrature quantum limit of 1/2",
                self.n_add_eff
            ));
        }
        w
    }

    /// Optical damping in the resolved-sideband limit, Γ = 4g²/κ.
    pub fn gamma_opt(&self) -> f64 {
        4.0 * self.g * self.g / self.kappa
    }

    /// White background 1/2 + n_add'.
    pub fn floor(&self) -> f64 {
        0.5 + self.n_add_eff
    }
}

/// Recipe for a frequency axis centered on the mechanical sideband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center_hz: f64,
    /// Half of the total span (Hz).
    pub half_span_hz: f64,
    pub points: usize,
    /// When set, points are packed near the center with a sinh mapping whose
    /// linear core has this half-width (Hz); spacing grows exponentially
    /// beyond it.
    pub densify_core_hz: Option<f64>,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 4096;
    /// Widest default half-span; keeps the ħω variation across the trace negligible.
    pub const MAX_DEFAULT_HALF_SPAN_HZ: f64 = 2e6;

    pub fn uniform(center_hz: f64, half_span_hz: f64, points: usize) -> Self {
        Self {
            center_hz,
            half_span_hz,
            points,
            densify_core_hz: None,
        }
    }

    /// 4096 uniform points over ±20·max(Γ_m', κ) around Ω_m, capped at ±2 MHz.
    pub fn around_sideband(params: &ModelParams) -> Self {
        let width = (params.gamma_m + params.gamma_opt()).max(params.kappa);
        let half = (20.0 * rad_to_hz(width)).min(Self::MAX_DEFAULT_HALF_SPAN_HZ);
        Self::uniform(rad_to_hz(params.omega_m), half, Self::DEFAULT_POINTS)
    }

    /// [`Self::around_sideband`] with points packed into a core of ±2Γ_m'
    /// around the peak, for mechanical lines much narrower than the span.
    pub fn resolving_peak(params: &ModelParams) -> Self {
        let gamma = rad_to_hz(params.gamma_m + params.gamma_opt());
        Self::around_sideband(params).with_densify(2.0 * gamma)
    }

    /// 4096 uniform points over ±20·Γ_m' around Ω_m: the mechanical line
    /// alone, as for peak-area measurements at weak drive.
    pub fn mechanical_peak(params: &ModelParams) -> Self {
        let gamma = rad_to_hz(params.gamma_m + params.gamma_opt());
        Self::uniform(
            rad_to_hz(params.omega_m),
            20.0 * gamma,
            Self::DEFAULT_POINTS,
        )
    }

    pub fn with_densify(mut self, core_hz: f64) -> Self {
        self.densify_core_hz = Some(core_hz);
        self
    }

    pub fn build(&self) -> Result<Vec<f64>> {
        if self.points < MIN_TRACE_LEN {
            return Err(Error::domain(format!(
                "grid needs at least {MIN_TRACE_LEN} points"
            )));
        }
        if !(self.half_span_hz > 0.0 && self.center_hz.is_finite()) {
            return Err(Error::domain("grid half-span must be positive"));
        }
        let n = self.points;
        let u = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let offsets: Vec<f64> = match self.densify_core_hz {
            None => (0..n).map(|i| self.half_span_hz * u(i)).collect(),
            Some(core) => {
                if !(core > 0.0) {
                    return Err(Error::domain("densify core width must be positive"));
                }
                let b = (self.half_span_hz / core).asinh();
                (0..n).map(|i| core * (b * u(i)).sinh()).collect()
            }
        };
        let grid: Vec<f64> = offsets.into_iter().map(|d| self.center_hz + d).collect();
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain(
                "grid spacing below floating-point resolution",
            ));
        }
        Ok(grid)
    }
}

/// Angular offsets δ = 2πf − Ω_m for a frequency axis.
pub fn detunings(freq_hz: &[f64], omega_m: f64) -> Vec<f64> {
    freq_hz.iter().map(|f| hz_to_rad(*f) - omega_m).collect()
}

/// Trapezoidal ∫ y df over a (possibly non-uniform) axis.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Reference frequency for quanta <-> W/Hz conversion. The detected sideband
/// sits at the cavity resonance; ħω varies by < 1e-4 relative across a
/// ±2 MHz trace.
pub fn quanta_reference_omega(device: &DeviceParams) -> f64 {
    device.cavity.omega_c()
}
