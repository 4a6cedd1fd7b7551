//! Static device description and elementary derived quantities.
//!
//! Everything in here is immutable after construction; constructors validate
//! the invariants so downstream code never sees a non-positive rate or mass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constants::{hz_to_rad, rad_to_hz, BOLTZMANN, HBAR};
use crate::error::{Error, Result};

/// A single mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    omega_m: f64,
    gamma_m: f64,
    mass: f64,
}

impl MechanicalMode {
    /// `omega_m` and `gamma_m` in rad/s, `mass` in kg.
    pub fn new(omega_m: f64, gamma_m: f64, mass: f64) -> Result<Self> {
        for (name, v) in [("omega_m", omega_m), ("gamma_m", gamma_m), ("mass", mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if omega_m < gamma_m {
            return Err(Error::domain(format!(
                "quality factor omega_m/gamma_m = {} is below 1",
                omega_m / gamma_m
            )));
        }
        Ok(Self {
            omega_m,
            gamma_m,
            mass,
        })
    }

    pub fn omega_m(&self) -> f64 {
        self.omega_m
    }

    pub fn gamma_m(&self) -> f64 {
        self.gamma_m
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Same mode with a different intrinsic linewidth.
    pub fn with_gamma_m(&self, gamma_m: f64) -> Result<Self> {
        Self::new(self.omega_m, gamma_m, self.mass)
    }
}

/// Microwave cavity: resonance, external and intrinsic loss, output geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cavity {
    omega_c: f64,
    kappa_ex: f64,
    kappa_0: f64,
    beta: f64,
}

impl Cavity {
    /// Output fraction for a symmetric two-port (feed line) geometry.
    pub const BETA_TWO_PORT: f64 = 0.5;
    /// Output fraction for a single-port geometry.
    pub const BETA_SINGLE_PORT: f64 = 1.0;

    pub fn new(omega_c: f64, kappa_ex: f64, kappa_0: f64, beta: f64) -> Result<Self> {
        if !(omega_c.is_finite() && omega_c > 0.0) {
            return Err(Error::domain(format!(
                "omega_c must be positive, got {omega_c}"
            )));
        }
        if !(kappa_ex.is_finite() && kappa_ex >= 0.0 && kappa_0.is_finite() && kappa_0 >= 0.0) {
            return Err(Error::domain("kappa_ex and kappa_0 must be non-negative"));
        }
        if kappa_ex + kappa_0 <= 0.0 {
            return Err(Error::domain(
                "total cavity linewidth kappa must be positive",
            ));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!(
                "beta must lie in (0, 1], got {beta}"
            )));
        }
        Ok(Self {
            omega_c,
            kappa_ex,
            kappa_0,
            beta,
        })
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn kappa_ex(&self) -> f64 {
        self.kappa_ex
    }

    pub fn kappa_0(&self) -> f64 {
        self.kappa_0
    }

    /// Total energy decay rate κ = κ_0 + κ_ex.
    pub fn kappa(&self) -> f64 {
        self.kappa_0 + self.kappa_ex
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Parametric coupling, stored as the cavity pull G = dω_c/dx (rad/s per m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    g_pull: f64,
}

impl Coupling {
    pub fn new(g_pull: f64) -> Result<Self> {
        if !(g_pull.is_finite() && g_pull > 0.0) {
            return Err(Error::domain(format!(
                "cavity pull G must be positive, got {g_pull}"
            )));
        }
        Ok(Self { g_pull })
    }

    /// G in rad/s per meter.
    pub fn g_pull(&self) -> f64 {
        self.g_pull
    }

    /// Vacuum coupling rate g0 = G x_zp (rad/s).
    pub fn g0(&self, mech: &MechanicalMode) -> f64 {
        self.g_pull * zero_point_motion(mech)
    }
}

/// Full description of one electromechanical device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub mech: MechanicalMode,
    pub cavity: Cavity,
    pub coupling: Coupling,
}

impl DeviceParams {
    pub fn new(mech: MechanicalMode, cavity: Cavity, coupling: Coupling) -> Self {
        Self {
            mech,
            cavity,
            coupling,
        }
    }

    /// The aluminum-membrane device: Ω_m/2π = 10.56 MHz, Γ_m/2π = 32 Hz,
    /// m = 48 pg, ω_c/2π = 7.54 GHz, κ/2π = 200 kHz with κ_ex/2π = 133 kHz,
    /// G/2π = 49 MHz/nm, two-port output (β = 1/2).
    pub fn reference() -> Self {
        parse_device_file(REFERENCE_DEVICE_FILE).expect("reference device file is valid")
    }

    /// Sideband resolution Ω_m/κ.
    pub fn sideband_resolution(&self) -> f64 {
        self.mech.omega_m() / self.cavity.kappa()
    }

    pub fn x_zp(&self) -> f64 {
        zero_point_motion(&self.mech)
    }

    pub fn g0(&self) -> f64 {
        self.coupling.g0(&self.mech)
    }

    /// Renders the device in the key=value file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.file_entries() {
            let _ = writeln!(out, "{key}={value:e}");
        }
        out
    }

    fn file_entries(&self) -> [(&'static str, f64); 8] {
        [
            ("omega_m_hz", rad_to_hz(self.mech.omega_m())),
            ("gamma_m_hz", rad_to_hz(self.mech.gamma_m())),
            ("mass_kg", self.mech.mass()),
            ("omega_c_hz", rad_to_hz(self.cavity.omega_c())),
            ("kappa_ex_hz", rad_to_hz(self.cavity.kappa_ex())),
            ("kappa_0_hz", rad_to_hz(self.cavity.kappa_0())),
            ("beta", self.cavity.beta()),
            ("G_hz_per_m", rad_to_hz(self.coupling.g_pull())),
        ]
    }
}

/// Keys accepted in a device parameter file, in canonical order.
pub const DEVICE_FILE_KEYS: [&str; 8] = [
    "omega_m_hz",
    "gamma_m_hz",
    "mass_kg",
    "omega_c_hz",
    "kappa_ex_hz",
    "kappa_0_hz",
    "beta",
    "G_hz_per_m",
];

/// Parameter file for the reference membrane device. Provenance of each value
/// is noted in the comment above it.
pub const REFERENCE_DEVICE_FILE: &str = "\
# Reference aluminum-membrane electromechanical device.
# *_hz keys are ordinary frequencies; rates are 2*pi times these.
#
# mechanical resonance, measured: 10.56 MHz
omega_m_hz=10.56e6
# intrinsic mechanical linewidth, measured: 32 Hz (Q_m = 3.3e5)
gamma_m_hz=32
# effective mass: 48 pg
mass_kg=48e-15
# cavity resonance, measured: 7.54 GHz
omega_c_hz=7.54e9
# external coupling to the feed line, measured: 133 kHz
kappa_ex_hz=133e3
# intrinsic loss, derived: kappa - kappa_ex with kappa = 200 kHz
kappa_0_hz=67e3
# output geometry: symmetric two-port circuit, half the field leaves via the output
beta=0.5
# cavity pull G/2pi = 49 +/- 2 MHz/nm, from the temperature-sweep calibration
G_hz_per_m=4.9e16
";

/// Parses the flat `key=value` device format.
///
/// Blank lines and lines starting with `#` are ignored. Unknown keys and
/// duplicates are rejected; all missing keys are reported at once.
pub fn parse_device_file(text: &str) -> Result<DeviceParams> {
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got `{line}`"),
        })?;
        let key = key.trim();
        let known = DEVICE_FILE_KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("`{}` is not a number", value.trim()),
        })?;
        if values.insert(known, value).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    let missing: Vec<String> = DEVICE_FILE_KEYS
        .iter()
        .filter(|k| !values.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let v = |k: &str| values[k];
    let mech = MechanicalMode::new(
        hz_to_rad(v("omega_m_hz")),
        hz_to_rad(v("gamma_m_hz")),
        v("mass_kg"),
    )?;
    let cavity = Cavity::new(
        hz_to_rad(v("omega_c_hz")),
        hz_to_rad(v("kappa_ex_hz")),
        hz_to_rad(v("kappa_0_hz")),
        v("beta"),
    )?;
    let coupling = Coupling::new(hz_to_rad(v("G_hz_per_m")))?;
    Ok(DeviceParams::new(mech, cavity, coupling))
}

/// Zero-point motion x_zp = √(ħ / 2 m Ω_m) in meters.
pub fn zero_point_motion(mech: &MechanicalMode) -> f64 {
    (HBAR / (2.0 * mech.mass() * mech.omega_m())).sqrt()
}

/// Mechanical quality factor Ω_m / Γ_m.
pub fn quality_factor(mech: &MechanicalMode) -> f64 {
    mech.omega_m() / mech.gamma_m()
}

/// Bose-Einstein occupancy [exp(ħω/k_B T) − 1]⁻¹. Exactly zero at T = 0.
pub fn bose_occupancy(temperature: f64, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!(
            "omega must be positive, got {omega}"
        )));
    }
    if !(temperature >= 0.0) {
        return Err(Error::domain(format!(
            "temperature must be non-negative, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (HBAR * omega / (BOLTZMANN * temperature)).exp_m1())
}

/// Temperature at which a mode of frequency `omega` holds `n` thermal quanta.
pub fn temperature_for_occupancy(n: f64, omega: f64) -> Result<f64> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::domain(format!(
            "occupancy must be positive, got {n}"
        )));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!(
            "omega must be positive, got {omega}"
        )));
    }
    Ok(HBAR * omega / (BOLTZMANN * (1.0 / n).ln_1p()))
}
