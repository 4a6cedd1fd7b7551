use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lm::Coord;
use super::{solve, FitResult, Problem, Weighting};
use crate::error::{Error, Result};
use crate::spectra::{
    check_stability, detunings, output_noise_density, ModelParams, ParamName, SpectrumTrace, Unit,
};

/// Parameters fitted per drive power by default; κ and Δ̃ come from separate
/// cavity measurements.
pub const DEFAULT_FREE: [ParamName; 4] = [
    ParamName::NmT,
    ParamName::Nc,
    ParamName::G,
    ParamName::NAddEff,
];

/// Options for [`fit_full_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullModelOptions {
    pub free: Vec<ParamName>,
    pub weighting: Weighting,
}

impl Default for FullModelOptions {
    fn default() -> Self {
        Self {
            free: DEFAULT_FREE.to_vec(),
            weighting: Weighting::Model,
        }
    }
}

/// Starting value for a positive parameter that is zero in the initial guess.
fn fallback_start(name: ParamName, init: &ModelParams) -> f64 {
    match name {
        ParamName::G => init.kappa / 100.0,
        ParamName::NmT => 1.0,
        ParamName::Nc => 0.1,
        ParamName::NAddEff => 1.0,
        ParamName::Kappa | ParamName::GammaM | ParamName::DeltaTilde => {
            unreachable!("validated positive")
        }
    }
}

/// Fits the full output noise model to a trace in quanta.
///
/// Parameters not in `opts.free` keep their values from `init`. Positive
/// parameters are fitted in log space; a parameter that ends at its lower
/// bound (10⁻¹⁰ of its starting value) is listed in `at_bound`.
pub fn fit_full_model(
    trace: &SpectrumTrace,
    init: &ModelParams,
    opts: &FullModelOptions,
) -> Result<FitResult> {
    trace.expect_unit(Unit::Quanta)?;
    init.validate()?;
    if opts.free.is_empty() {
        return Err(Error::FitSetup("free parameter set is empty".into()));
    }
    for (i, a) in opts.free.iter().enumerate() {
        if opts.free[..i].contains(a) {
            return Err(Error::FitSetup(format!("parameter `{a}` listed twice")));
        }
    }

    let mut coords = Vec::new();
    let mut p0 = Vec::new();
    let mut typical = Vec::new();
    for &name in &opts.free {
        let v = init.get(name);
        if name.is_positive() {
            let start = if v > 0.0 {
                v
            } else {
                fallback_start(name, init)
            };
            // kappa_ex is held fixed and bounds kappa from below
            coords.push(if name == ParamName::Kappa {
                Coord::Log {
                    lower: init.kappa_ex,
                    typical: start,
                }
            } else {
                Coord::positive(start)
            });
            p0.push(start);
            typical.push(start);
        } else {
            let scale = v.abs().max(1e-3 * init.kappa);
            coords.push(Coord::Affine { anchor: v, scale });
            p0.push(v);
            typical.push(scale);
        }
    }
    let mut fixed: BTreeMap<String, f64> = ParamName::ALL
        .iter()
        .filter(|n| !opts.free.contains(n))
        .map(|n| (n.as_str().to_string(), init.get(*n)))
        .collect();
    fixed.insert("kappa_ex".into(), init.kappa_ex);
    fixed.insert("beta".into(), init.beta);
    fixed.insert("omega_m".into(), init.omega_m);

    let deltas = detunings(trace.freq_hz(), init.omega_m);
    let free = opts.free.clone();
    let build = |p: &[f64]| -> ModelParams {
        let mut m = *init;
        for (name, v) in free.iter().zip(p) {
            m.set(*name, *v);
        }
        m
    };
    let model = |p: &[f64]| -> Option<Vec<f64>> {
        let m = build(p);
        check_stability(&m).ok()?;
        Some(
            deltas
                .iter()
                .map(|d| output_noise_density(*d, &m))
                .collect(),
        )
    };
    let pb = Problem {
        names: opts.free.iter().map(|n| n.as_str().to_string()).collect(),
        coords,
        p0,
        typical,
        data: trace.values(),
        n_avg: trace.meta.n_avg,
        weighting: opts.weighting,
        model: &model,
    };
    solve(&pb, fixed, init.warnings())
}

/// `base` with every parameter fitted in `fit` substituted.
pub fn apply_fit(base: &ModelParams, fit: &FitResult) -> Result<ModelParams> {
    let mut m = *base;
    for (k, v) in &fit.params {
        m.set(k.parse()?, *v);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceParams;
    use crate::dynamics::ThermalState;
    use crate::spectra::{output_noise_spectrum, GridSpec};

    fn truth(n_d: f64, n_c: f64) -> ModelParams {
        let th = ThermalState::from_occupancies(40.0, n_c).unwrap();
        ModelParams::from_device(&DeviceParams::reference(), n_d, &th, 2.1).unwrap()
    }

    #[test]
    fn noiseless_round_trip() {
        let t = truth(4000.0, 0.2);
        let grid = GridSpec::around_sideband(&t).build().unwrap();
        let mut s = output_noise_spectrum(&grid, &t).unwrap();
        s.meta.n_avg = Some(500);
        let init = ModelParams {
            g: t.g * 1.1,
            n_m_t: 30.0,
            n_c: 0.5,
            n_add_eff: 1.5,
            ..t
        };
        let r = fit_full_model(&s, &init, &FullModelOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.warnings);
        for (k, v) in [
            ("g", t.g),
            ("n_m_T", 40.0),
            ("n_c", 0.2),
            ("n_add_eff", 2.1),
        ] {
            assert!(
                (r.params[k] - v).abs() / v < 1e-6,
                "{k}: {} vs {v}",
                r.params[k]
            );
        }
        assert!(r.sigma("g").unwrap() > 0.0);
        let fitted = apply_fit(&init, &r).unwrap();
        assert!((fitted.g - t.g).abs() / t.g < 1e-6);
        assert_eq!(r.fixed["kappa"], t.kappa);
    }

    #[test]
    fn rejects_bad_setup() {
        let t = truth(4000.0, 0.2);
        let grid = GridSpec::around_sideband(&t).build().unwrap();
        let s = output_noise_spectrum(&grid, &t).unwrap();
        let dup = FullModelOptions {
            free: vec![ParamName::G, ParamName::G],
            ..Default::default()
        };
        assert!(matches!(
            fit_full_model(&s, &t, &dup),
            Err(Error::FitSetup(_))
        ));
        let none = FullModelOptions {
            free: vec![],
            ..Default::default()
        };
        assert!(matches!(
            fit_full_model(&s, &t, &none),
            Err(Error::FitSetup(_))
        ));
        let w = s.to_watts_per_hz(1e10).unwrap();
        assert!(matches!(
            fit_full_model(&w, &t, &FullModelOptions::default()),
            Err(Error::UnitMismatch { .. })
        ));
    }
}
