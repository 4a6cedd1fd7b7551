use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::full_model::{apply_fit, fit_full_model, FullModelOptions};
use super::FitResult;
use crate::constants::TWO_PI;
use crate::device::DeviceParams;
use crate::dynamics::{coupling_rate, final_occupancy, CoolingPoint, ThermalState};
use crate::error::{Error, Result};
use crate::limits::{heisenberg_product, imprecision_from_chain, MEASURED_N_ADD_EFF};
use crate::spectra::{ModelParams, ParamName, SpectrumTrace};

/// One line of a sweep manifest (JSON array of these).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_d: Option<f64>,
    /// Cryostat temperature (K).
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Relative paths resolve against the manifest's directory.
    pub trace_path: String,
}

/// Options for [`analyze_cooling_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub fit: FullModelOptions,
    /// Starting value for n_add'.
    pub n_add_guess: f64,
    /// Refit with g fixed when the fitted g is less certain than this (relative).
    pub max_g_rel_sigma: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            fit: FullModelOptions::default(),
            n_add_guess: MEASURED_N_ADD_EFF,
            max_g_rel_sigma: 0.1,
        }
    }
}

/// Fitted cooling state at one drive power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(flatten)]
    pub cooling: CoolingPoint,
    pub n_m_sigma: f64,
    pub n_c_sigma: f64,
    pub g_sigma: Option<f64>,
    /// False when g was held at coupling_rate(n_d).
    pub g_fitted: bool,
    /// (g_fit − g_expected)/g_expected against coupling_rate(n_d).
    pub g_deviation: f64,
    pub n_m_t: f64,
    pub n_add_eff: f64,
    pub n_imp: f64,
    /// Upper bound on the imprecision-backaction product (units of ħ).
    pub product_bound: Option<f64>,
    /// Lowest `product_bound` up to and including this drive.
    pub running_min_product: Option<f64>,
    pub provenance: String,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub n_d: f64,
    pub reason: String,
}

/// Fitted occupancies against drive strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingCurve {
    /// Converged points in increasing n_d.
    pub points: Vec<SweepPoint>,
    pub excluded: Vec<ExcludedPoint>,
    /// Exponent of g ∝ n_d^a over points where g was fitted.
    pub g_exponent: Option<f64>,
    pub g_exponent_sigma: Option<f64>,
}

impl CoolingCurve {
    pub const CSV_HEADER: &'static str =
        "n_d,g_hz,gamma_total_hz,n_m,n_m_sigma,n_c,n_c_sigma,n_imp";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let c = &p.cooling;
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                c.n_d,
                c.g / TWO_PI,
                c.gamma_total / TWO_PI,
                c.n_m,
                p.n_m_sigma,
                c.n_c,
                p.n_c_sigma,
                p.n_imp
            );
        }
        out
    }

    /// Point with the lowest fitted n_m.
    pub fn minimum(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .min_by(|a, b| a.cooling.n_m.total_cmp(&b.cooling.n_m))
    }

    pub fn min_product_bound(&self) -> Option<f64> {
        self.points
            .iter()
            .filter_map(|p| p.product_bound)
            .reduce(f64::min)
    }
}

fn occupancy(m: &ModelParams) -> Result<f64> {
    let th = ThermalState {
        temperature: None,
        n_m_t: m.n_m_t,
        n_c: m.n_c,
    };
    final_occupancy(&th, m.g, m.kappa, m.gamma_m)
}

/// Delta-method uncertainty of n_m from the fit covariance.
fn occupancy_sigma(base: &ModelParams, fit: &FitResult) -> Result<f64> {
    let Some(cov) = &fit.covariance else {
        return Ok(f64::NAN);
    };
    let names: Vec<ParamName> = fit
        .free_order
        .iter()
        .map(|n| n.parse())
        .collect::<Result<_>>()?;
    let mut grad = Vec::with_capacity(names.len());
    for &name in &names {
        let v = base.get(name);
        let h = (1e-6 * v.abs()).max(1e-12);
        let mut up = *base;
        up.set(name, v + h);
        let mut dn = *base;
        dn.set(name, (v - h).max(0.0));
        let span = v + h - (v - h).max(0.0);
        grad.push((occupancy(&up)? - occupancy(&dn)?) / span);
    }
    let mut var = 0.0;
    for i in 0..grad.len() {
        for j in 0..grad.len() {
            var += grad[i] * cov[i][j] * grad[j];
        }
    }
    Ok(var.max(0.0).sqrt())
}

/// n_m implied by a full-model fit started from `init`, with its
/// delta-method σ (NaN when the fit has no covariance).
pub fn fitted_occupancy(init: &ModelParams, fit: &FitResult) -> Result<(f64, f64)> {
    let m = apply_fit(init, fit)?;
    Ok((occupancy(&m)?, occupancy_sigma(&m, fit)?))
}

/// Fit, fitted parameters, whether g was fitted, and the g source label.
type PointFit = (FitResult, ModelParams, bool, String);

fn fit_point(
    n_d: f64,
    trace: &SpectrumTrace,
    device: &DeviceParams,
    thermal: &ThermalState,
    opts: &SweepOptions,
) -> Result<PointFit> {
    let init = ModelParams::from_device(device, n_d, thermal, opts.n_add_guess)?;
    let fits_g = opts.fit.free.contains(&ParamName::G);
    let reason = if fits_g {
        match fit_full_model(trace, &init, &opts.fit) {
            Ok(r) => {
                let g = r.params["g"];
                let rel = r.sigma("g").map(|s| s / g);
                let at_bound = r.at_bound.iter().any(|n| n == "g");
                match rel {
                    Some(rel) if r.converged && !at_bound && rel <= opts.max_g_rel_sigma => {
                        let fitted = apply_fit(&init, &r)?;
                        return Ok((r, fitted, true, "free fit".into()));
                    }
                    Some(rel) if r.converged && !at_bound => {
                        format!("g poorly determined (relative sigma {rel:.3})")
                    }
                    _ if at_bound => "g at its lower bound".to_string(),
                    _ => "free fit did not converge".to_string(),
                }
            }
            Err(Error::DegenerateJacobian { first, second }) => {
                format!("degenerate pair ({first}, {second})")
            }
            Err(e) => return Err(e),
        }
    } else {
        "g not in the free set".to_string()
    };
    let fixed_opts = FullModelOptions {
        free: opts
            .fit
            .free
            .iter()
            .copied()
            .filter(|n| *n != ParamName::G)
            .collect(),
        weighting: opts.fit.weighting,
    };
    let r = fit_full_model(trace, &init, &fixed_opts)?;
    let fitted = apply_fit(&init, &r)?;
    Ok((
        r,
        fitted,
        false,
        format!("g fixed at coupling_rate(n_d): {reason}"),
    ))
}

/// Fits every trace of a drive-power sweep and assembles the cooling curve.
///
/// Each point is first fitted with `opts.fit.free`. If g cannot be pinned
/// down (degenerate with n_m^T, at its bound, or relative σ above
/// `opts.max_g_rel_sigma`) the point is refitted with g held at
/// coupling_rate(n_d), and the point's provenance says so. n_m follows from
/// the fitted rates and occupancies; its σ is propagated from the fit
/// covariance. Points whose fits fail or do not converge are listed in
/// `excluded`. Points are fitted in parallel; results do not depend on
/// scheduling.
pub fn analyze_cooling_sweep(
    sweep: &[(f64, SpectrumTrace)],
    device: &DeviceParams,
    thermal: &ThermalState,
    opts: &SweepOptions,
) -> Result<CoolingCurve> {
    let mut order: Vec<usize> = (0..sweep.len()).collect();
    order.sort_by(|a, b| sweep[*a].0.total_cmp(&sweep[*b].0));
    for w in order.windows(2) {
        if sweep[w[0]].0 == sweep[w[1]].0 {
            return Err(Error::FitSetup(format!(
                "duplicate drive n_d = {}",
                sweep[w[0]].0
            )));
        }
    }
    let fits: Vec<(f64, Result<PointFit>)> = order
        .par_iter()
        .map(|&i| {
            let (n_d, trace) = &sweep[i];
            (*n_d, fit_point(*n_d, trace, device, thermal, opts))
        })
        .collect();

    let mut points: Vec<SweepPoint> = Vec::new();
    let mut excluded = Vec::new();
    let mut running: Option<f64> = None;
    for (n_d, res) in fits {
        let (fit, m, g_fitted, provenance) = match res {
            Ok(v) => v,
            Err(e) => {
                excluded.push(ExcludedPoint {
                    n_d,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !fit.converged {
            excluded.push(ExcludedPoint {
                n_d,
                reason: format!("fit did not converge ({provenance})"),
            });
            continue;
        }
        let n_m = occupancy(&m)?;
        let n_m_sigma = occupancy_sigma(&m, &fit)?;
        let n_c_sigma = fit.sigma("n_c").unwrap_or(0.0);
        let g_expected = coupling_rate(&device.coupling, &device.mech, n_d)?;
        let gamma_opt = m.gamma_opt();
        let n_imp =
            imprecision_from_chain(m.g, m.kappa, m.kappa_ex, m.gamma_m, m.beta, m.n_add_eff)
                .unwrap_or(f64::INFINITY);
        let product_bound = heisenberg_product(n_imp, n_m + 0.5, true)
            .ok()
            .map(|h| h.value);
        if let Some(p) = product_bound {
            running = Some(running.map_or(p, |r: f64| r.min(p)));
        }
        points.push(SweepPoint {
            cooling: CoolingPoint {
                n_d,
                g: m.g,
                gamma_opt,
                gamma_total: m.gamma_m + gamma_opt,
                n_m,
                n_c: m.n_c,
            },
            n_m_sigma,
            n_c_sigma,
            g_sigma: if g_fitted { fit.sigma("g") } else { None },
            g_fitted,
            g_deviation: (m.g - g_expected) / g_expected,
            n_m_t: m.n_m_t,
            n_add_eff: m.n_add_eff,
            n_imp,
            product_bound,
            running_min_product: running,
            provenance,
            fit,
        });
    }

    let (g_exponent, g_exponent_sigma) = power_law(
        &points
            .iter()
            .filter(|p| p.g_fitted)
            .map(|p| (p.cooling.n_d, p.cooling.g))
            .collect::<Vec<_>>(),
    );
    Ok(CoolingCurve {
        points,
        excluded,
        g_exponent,
        g_exponent_sigma,
    })
}

/// Least-squares slope of ln y against ln x, with its standard error.
fn power_law(xy: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64)> = xy
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (None, None);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return (None, None);
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    if pts.len() < 3 {
        return (Some(slope), None);
    }
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    (Some(slope), Some((ss / (n - 2.0) / sxx).sqrt()))
}
