//! Drive bookkeeping and steady-state sideband cooling.
//!
//! The occupancy formulas assume the drive sits on the red sideband
//! (Δ = −Ω_m). Anything off that point has to go through the full spectral
//! model in [`crate::spectra`].

use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::device::{
    bose_occupancy, zero_point_motion, Cavity, Coupling, DeviceParams, MechanicalMode,
};
use crate::error::{Error, Result};

/// How strongly the cavity is driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveStrength {
    /// Mean intracavity photon number n_d.
    Photons(f64),
    /// Input power P_i at the cavity feed line (W).
    InputPower(f64),
}

/// A coherent microwave drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    omega_d: f64,
    detuning: f64,
    strength: DriveStrength,
}

impl DriveConfig {
    /// Drive at detuning Δ = ω_d − ω_c from the given cavity.
    pub fn new(cavity: &Cavity, detuning: f64, strength: DriveStrength) -> Result<Self> {
        let s = match strength {
            DriveStrength::Photons(v) | DriveStrength::InputPower(v) => v,
        };
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::domain(format!(
                "drive strength must be non-negative, got {s}"
            )));
        }
        if !detuning.is_finite() {
            return Err(Error::domain("detuning must be finite"));
        }
        Ok(Self {
            omega_d: cavity.omega_c() + detuning,
            detuning,
            strength,
        })
    }

    /// Drive on the red sideband, Δ = −Ω_m.
    pub fn red_sideband(device: &DeviceParams, strength: DriveStrength) -> Result<Self> {
        Self::new(&device.cavity, -device.mech.omega_m(), strength)
    }

    pub fn omega_d(&self) -> f64 {
        self.omega_d
    }

    /// Δ = ω_d − ω_c.
    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn strength(&self) -> DriveStrength {
        self.strength
    }

    /// Δ̃ = Δ + Ω_m, the offset from the optimal cooling detuning.
    pub fn delta_tilde(&self, omega_m: f64) -> f64 {
        self.detuning + omega_m
    }

    /// Intracavity photon number, converting from input power if needed.
    pub fn photons(&self, cavity: &Cavity) -> Result<f64> {
        match self.strength {
            DriveStrength::Photons(n) => Ok(n),
            DriveStrength::InputPower(p) => intracavity_photons(p, self, cavity),
        }
    }

    /// Input power, converting from photon number if needed.
    pub fn input_power(&self, cavity: &Cavity) -> Result<f64> {
        match self.strength {
            DriveStrength::Photons(n) => input_power_for_photons(n, self, cavity),
            DriveStrength::InputPower(p) => Ok(p),
        }
    }
}

/// Thermal environment of the mechanical and cavity modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Bath temperature, when the state was built from one.
    pub temperature: Option<f64>,
    /// Mechanical bath occupancy n_m^T.
    pub n_m_t: f64,
    /// Cavity occupancy n_c.
    pub n_c: f64,
}

impl ThermalState {
    pub fn from_occupancies(n_m_t: f64, n_c: f64) -> Result<Self> {
        if !(n_m_t >= 0.0 && n_c >= 0.0 && n_m_t.is_finite() && n_c.is_finite()) {
            return Err(Error::domain("occupancies must be non-negative and finite"));
        }
        Ok(Self {
            temperature: None,
            n_m_t,
            n_c,
        })
    }

    /// Mechanical bath at temperature `t`; the cavity occupancy is given separately.
    pub fn from_temperature(t: f64, mech: &MechanicalMode, n_c: f64) -> Result<Self> {
        let n_m_t = bose_occupancy(t, mech.omega_m())?;
        let mut s = Self::from_occupancies(n_m_t, n_c)?;
        s.temperature = Some(t);
        Ok(s)
    }
}

/// Steady-state cooling summary at one drive strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingPoint {
    pub n_d: f64,
    /// Coupling rate g (rad/s).
    pub g: f64,
    /// Optical damping Γ = Γ₊ − Γ₋ (rad/s).
    pub gamma_opt: f64,
    /// Total mechanical linewidth Γ_m' (rad/s).
    pub gamma_total: f64,
    pub n_m: f64,
    pub n_c: f64,
}

/// Sideband scattering rates at a given detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandRates {
    /// Anti-Stokes (cooling) rate Γ₊.
    pub up: f64,
    /// Stokes (heating) rate Γ₋.
    pub down: f64,
}

impl SidebandRates {
    /// Net optical damping Γ = Γ₊ − Γ₋.
    pub fn net(&self) -> f64 {
        self.up - self.down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingRegime {
    /// 4g² < κΓ_m: optical damping below intrinsic damping.
    Weak,
    /// Sideband cooling without hybridization.
    Cooling,
    /// 2g > κ/√2: normal-mode splitting appears in the output spectrum.
    Strong,
}

/// Coupling rate g = G x_zp √n_d.
pub fn coupling_rate(coupling: &Coupling, mech: &MechanicalMode, n_d: f64) -> Result<f64> {
    if !(n_d >= 0.0 && n_d.is_finite()) {
        return Err(Error::domain(format!(
            "photon number must be non-negative, got {n_d}"
        )));
    }
    Ok(coupling.g_pull() * zero_point_motion(mech) * n_d.sqrt())
}

/// Γ± = 4g²κ / [κ² + 4(Δ ± Ω_m)²].
pub fn sideband_rates(g: f64, kappa: f64, detuning: f64, omega_m: f64) -> Result<SidebandRates> {
    if !(kappa > 0.0) {
        return Err(Error::domain(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let rate = |offset: f64| 4.0 * g * g * kappa / (kappa * kappa + 4.0 * offset * offset);
    Ok(SidebandRates {
        up: rate(detuning + omega_m),
        down: rate(detuning - omega_m),
    })
}

/// Γ_m' = Γ_m + Γ; errors when anti-damping overwhelms the intrinsic loss.
pub fn total_linewidth(gamma_m: f64, gamma_opt: f64) -> Result<f64> {
    if !(gamma_m > 0.0) {
        return Err(Error::domain(format!(
            "gamma_m must be positive, got {gamma_m}"
        )));
    }
    let total = gamma_m + gamma_opt;
    if !(total > 0.0) {
        return Err(Error::ParametricInstability { gamma_total: total });
    }
    Ok(total)
}

fn check_rates(g: f64, kappa: f64, gamma_m: f64) -> Result<()> {
    if !(g >= 0.0 && kappa > 0.0 && gamma_m > 0.0) {
        return Err(Error::domain(format!(
            "need g >= 0, kappa > 0, gamma_m > 0 (got g={g}, kappa={kappa}, gamma_m={gamma_m})"
        )));
    }
    Ok(())
}

/// Final mechanical occupancy at optimal detuning, lowest order in g/Ω_m, κ/Ω_m.
pub fn final_occupancy(state: &ThermalState, g: f64, kappa: f64, gamma_m: f64) -> Result<f64> {
    check_rates(g, kappa, gamma_m)?;
    let g2 = 4.0 * g * g;
    let denom = g2 + kappa * gamma_m;
    Ok(state.n_m_t * (gamma_m / kappa) * (g2 + kappa * kappa) / denom + state.n_c * g2 / denom)
}

/// Final occupancy including second-order corrections in g/Ω_m and κ/Ω_m.
///
/// The cavity bracket is expanded so that g = 0 stays finite:
/// n_c·4g²/(4g²+κΓ_m)·[1 + (8g²+κ²)(4g²+κΓ_m)/(8Ω_m²·4g²)]
/// = n_c·4g²/(4g²+κΓ_m) + n_c(8g²+κ²)/(8Ω_m²).
pub fn final_occupancy_2nd_order(
    state: &ThermalState,
    g: f64,
    kappa: f64,
    gamma_m: f64,
    omega_m: f64,
) -> Result<f64> {
    check_rates(g, kappa, gamma_m)?;
    if !(omega_m > 0.0) {
        return Err(Error::domain(format!(
            "omega_m must be positive, got {omega_m}"
        )));
    }
    let gg = g * g;
    let om2 = omega_m * omega_m;
    let denom = 4.0 * gg + kappa * gamma_m;
    let mech = state.n_m_t * (gamma_m / kappa) * (4.0 * gg + kappa * kappa) / denom
        * (1.0 + gg / om2 * denom / (4.0 * gg + kappa * kappa));
    let cav = state.n_c * 4.0 * gg / denom + state.n_c * (8.0 * gg + kappa * kappa) / (8.0 * om2);
    let floor = (8.0 * gg + kappa * kappa) / (16.0 * om2);
    Ok(mech + cav + floor)
}

/// n_d = (2 P_i / ħω_d) κ_ex / (κ² + 4Δ²).
pub fn intracavity_photons(p_in: f64, drive: &DriveConfig, cavity: &Cavity) -> Result<f64> {
    if !(p_in >= 0.0) {
        return Err(Error::domain(format!(
            "input power must be non-negative, got {p_in}"
        )));
    }
    Ok(p_in * photons_per_watt(drive, cavity))
}

/// Inverse of [`intracavity_photons`]: input power needed for `n_d` photons.
pub fn input_power_for_photons(n_d: f64, drive: &DriveConfig, cavity: &Cavity) -> Result<f64> {
    if !(n_d >= 0.0) {
        return Err(Error::domain(format!(
            "photon number must be non-negative, got {n_d}"
        )));
    }
    Ok(n_d / photons_per_watt(drive, cavity))
}

fn photons_per_watt(drive: &DriveConfig, cavity: &Cavity) -> f64 {
    let k = cavity.kappa();
    let d = drive.detuning();
    2.0 / (HBAR * drive.omega_d()) * cavity.kappa_ex() / (k * k + 4.0 * d * d)
}

/// Power leaving the cavity: P_o = P_i (κ_0² + 4Δ²) / (κ² + 4Δ²).
pub fn transmitted_power(p_in: f64, cavity: &Cavity, detuning: f64) -> Result<f64> {
    if !(p_in >= 0.0) {
        return Err(Error::domain(format!(
            "input power must be non-negative, got {p_in}"
        )));
    }
    let d2 = 4.0 * detuning * detuning;
    let k = cavity.kappa();
    let k0 = cavity.kappa_0();
    Ok(p_in * (k0 * k0 + d2) / (k * k + d2))
}

/// Time before one thermal phonon enters: τ = 1/(n_m^T Γ_m).
/// Returns `f64::INFINITY` for a zero-temperature bath.
pub fn storage_time(state: &ThermalState, gamma_m: f64) -> Result<f64> {
    if !(gamma_m > 0.0) {
        return Err(Error::domain(format!(
            "gamma_m must be positive, got {gamma_m}"
        )));
    }
    if state.n_m_t == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (state.n_m_t * gamma_m))
}

/// Classifies the coupling strength.
///
/// Weak when g < √(κΓ_m)/2 (so 4g² < κΓ_m), strong when 2g > κ/√2 (onset of
/// normal-mode splitting), cooling in between. The weak/cooling boundary
/// itself counts as cooling. The looser 2g > κ/2 phrasing sometimes used for
/// "strong coupling" is not used here.
pub fn coupling_regime(g: f64, kappa: f64, gamma_m: f64) -> CouplingRegime {
    if 2.0 * g > kappa / std::f64::consts::SQRT_2 {
        CouplingRegime::Strong
    } else if g < (kappa * gamma_m).sqrt() / 2.0 {
        CouplingRegime::Weak
    } else {
        CouplingRegime::Cooling
    }
}

/// Forward cooling summary at red-sideband drive with `n_d` photons.
pub fn cooling_point(
    device: &DeviceParams,
    n_d: f64,
    thermal: &ThermalState,
) -> Result<CoolingPoint> {
    let g = coupling_rate(&device.coupling, &device.mech, n_d)?;
    let kappa = device.cavity.kappa();
    let omega_m = device.mech.omega_m();
    let gamma_opt = sideband_rates(g, kappa, -omega_m, omega_m)?.net();
    let gamma_total = total_linewidth(device.mech.gamma_m(), gamma_opt)?;
    let n_m = final_occupancy(thermal, g, kappa, device.mech.gamma_m())?;
    Ok(CoolingPoint {
        n_d,
        g,
        gamma_opt,
        gamma_total,
        n_m,
        n_c: thermal.n_c,
    })
}
