//! Inverse problems: spectral fits, coupling calibration and cooling sweeps.

mod calibration;
mod full_model;
pub mod lm;
mod lorentzian;
mod sweep;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use lm::Coord;

pub use calibration::{calibrate_coupling, CalibrationPoint, CalibrationResult};
pub use full_model::{apply_fit, fit_full_model, FullModelOptions, DEFAULT_FREE};
pub use lorentzian::{fit_lorentzian, lorentzian, LorentzianOptions};
pub use sweep::{
    analyze_cooling_sweep, fitted_occupancy, CoolingCurve, ExcludedPoint, SweepEntry, SweepOptions,
    SweepPoint,
};

/// Total LM iteration budget of one fit, weight refreshes included.
pub const MAX_ITER: usize = 200;
/// Upper bound on model-weight refreshes.
pub const MAX_REFRESH: usize = 10;
/// A fit whose residual rms (in units of the per-bin noise) exceeds this is flagged.
pub const POOR_FIT_RMS: f64 = 5.0;

/// Per-bin noise model for the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// σ_i = model_i/√n_avg, refreshed from the current model.
    #[default]
    Model,
    /// One σ for all bins; uncertainties rescaled by the reduced χ².
    Uniform,
}

/// Outcome of a spectral fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Estimates of the free parameters.
    pub params: BTreeMap<String, f64>,
    /// Parameters held fixed.
    pub fixed: BTreeMap<String, f64>,
    /// 1-σ uncertainties, present only for converged fits.
    pub sigmas: Option<BTreeMap<String, f64>>,
    /// Covariance of the free parameters in `free_order`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub free_order: Vec<String>,
    /// rms of (data − model)/(model/√n_avg).
    pub residual_rms: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Free parameters that ended on their lower bound.
    pub at_bound: Vec<String>,
    /// Objective after each accepted step, one list per weight refresh.
    pub cost_history: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params
            .get(name)
            .or_else(|| self.fixed.get(name))
            .copied()
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.sigmas.as_ref()?.get(name).copied()
    }

    /// True when the residuals are much larger than the noise model allows.
    pub fn poor_fit(&self) -> bool {
        self.residual_rms > POOR_FIT_RMS
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.free_order.iter().position(|n| n == a)?;
        let j = self.free_order.iter().position(|n| n == b)?;
        Some(self.covariance.as_ref()?[i][j])
    }
}

/// A weighted least-squares problem in natural parameters.
pub(crate) struct Problem<'a> {
    pub names: Vec<String>,
    pub coords: Vec<Coord>,
    pub p0: Vec<f64>,
    /// Typical magnitude of each parameter, for scaling diagnostics.
    pub typical: Vec<f64>,
    pub data: &'a [f64],
    pub n_avg: Option<u64>,
    pub weighting: Weighting,
    pub model: &'a dyn Fn(&[f64]) -> Option<Vec<f64>>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn sigma_floor(data: &[f64]) -> f64 {
    let m = data.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    (m * 1e-12).max(f64::MIN_POSITIVE)
}

fn model_sigmas(model: &[f64], n_avg: f64, floor: f64) -> Vec<f64> {
    model
        .iter()
        .map(|m| (m.abs() / n_avg.sqrt()).max(floor))
        .collect()
}

/// Looks for a pair of parameters the data cannot separate.
///
/// Jacobian columns are scaled by each parameter's typical size. A vanishing
/// column, or a near-singular correlation matrix, names the pair with the
/// largest weights in the null direction. Otherwise a pair whose estimates are
/// almost perfectly correlated and poorly determined is reported.
fn degenerate_pair(
    j: &DMatrix<f64>,
    p: &[f64],
    typical: &[f64],
    cov: Option<&DMatrix<f64>>,
) -> Option<(usize, usize)> {
    let n = j.ncols();
    if n < 2 {
        return None;
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let s = p[k].abs().max(typical[k]);
            j.column(k).iter().map(|x| x * s).collect()
        })
        .collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    if let Some(k) = (0..n).find(|&k| !(norms[k] > 1e-9 * max_norm)) {
        // no influence at all; pair it with the dominant parameter
        let other = (0..n)
            .filter(|&i| i != k)
            .max_by(|a, b| norms[*a].total_cmp(&norms[*b]))?;
        return Some((k.min(other), k.max(other)));
    }
    let corr = DMatrix::from_fn(n, n, |a, b| {
        cols[a]
            .iter()
            .zip(&cols[b])
            .map(|(x, y)| x * y)
            .sum::<f64>()
            / (norms[a] * norms[b])
    });
    let eig = SymmetricEigen::new(corr);
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    if lmin < 1e-10 {
        let v = eig.eigenvectors.column(imin);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| v[*b].abs().total_cmp(&v[*a].abs()));
        return Some((idx[0].min(idx[1]), idx[0].max(idx[1])));
    }
    let cov = cov?;
    let mut worst: Option<(usize, usize, f64)> = None;
    for a in 0..n {
        for b in a + 1..n {
            let r = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
            let rel = |k: usize| cov[(k, k)].sqrt() / p[k].abs().max(typical[k]);
            if r.abs() > 0.995 && rel(a).max(rel(b)) > 0.5 && worst.is_none_or(|w| r.abs() > w.2) {
                worst = Some((a, b, r.abs()));
            }
        }
    }
    worst.map(|(a, b, _)| (a, b))
}

/// Runs LM with weight refreshes and assembles the [`FitResult`].
pub(crate) fn solve(
    pb: &Problem<'_>,
    fixed: BTreeMap<String, f64>,
    mut warnings: Vec<String>,
) -> Result<FitResult> {
    let n_data = pb.data.len();
    let n_par = pb.names.len();
    if n_par == 0 {
        return Err(Error::FitSetup("no free parameters".into()));
    }
    if n_data <= n_par {
        return Err(Error::FitSetup(format!(
            "{n_data} points cannot constrain {n_par} parameters"
        )));
    }
    let n_avg_f = pb.n_avg.unwrap_or(1) as f64;
    let floor = sigma_floor(pb.data);
    let m0 = (pb.model)(&pb.p0)
        .ok_or_else(|| Error::FitSetup("model undefined at the initial guess".into()))?;
    let mut sigma = match pb.weighting {
        Weighting::Model => model_sigmas(&m0, n_avg_f, floor),
        Weighting::Uniform => {
            let abs: Vec<f64> = pb.data.iter().map(|d| d.abs()).collect();
            vec![(median(&abs) / n_avg_f.sqrt()).max(floor); n_data]
        }
    };

    let mut p = pb.p0.clone();
    let mut total_iter = 0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut at_bound = vec![false; n_par];
    let mut cost = f64::INFINITY;
    for _ in 0..MAX_REFRESH {
        let s = sigma.clone();
        let resid = |q: &[f64]| -> Option<Vec<f64>> {
            let m = (pb.model)(q)?;
            Some(
                pb.data
                    .iter()
                    .zip(&m)
                    .zip(&s)
                    .map(|((d, m), s)| (d - m) / s)
                    .collect(),
            )
        };
        let out = lm::minimize(resid, &p, &pb.coords, MAX_ITER - total_iter);
        total_iter += out.n_iter;
        history.push(out.cost_history);
        let shift = p
            .iter()
            .zip(&out.p)
            .zip(&pb.coords)
            .map(|((a, b), c)| (c.internal(*a) - c.internal(*b)).abs())
            .fold(0.0, f64::max);
        p = out.p;
        at_bound = out.at_bound;
        cost = out.cost;
        if pb.weighting == Weighting::Uniform {
            converged = out.converged;
            break;
        }
        let m = (pb.model)(&p)
            .ok_or_else(|| Error::FitSetup("model undefined at the fitted point".into()))?;
        sigma = model_sigmas(&m, n_avg_f, floor);
        if out.converged && shift < 1e-6 {
            converged = true;
            break;
        }
        if total_iter >= MAX_ITER {
            break;
        }
    }

    let m = (pb.model)(&p)
        .ok_or_else(|| Error::FitSetup("model undefined at the fitted point".into()))?;
    let rms_sigma = model_sigmas(&m, n_avg_f, floor);
    let residual_rms = (pb
        .data
        .iter()
        .zip(&m)
        .zip(&rms_sigma)
        .map(|((d, m), s)| ((d - m) / s).powi(2))
        .sum::<f64>()
        / n_data as f64)
        .sqrt();

    let resid = |q: &[f64]| -> Option<Vec<f64>> {
        let m = (pb.model)(q)?;
        Some(
            pb.data
                .iter()
                .zip(&m)
                .zip(&sigma)
                .map(|((d, m), s)| (d - m) / s)
                .collect(),
        )
    };
    let jac = lm::jacobian(&resid, &p, &pb.coords)
        .ok_or_else(|| Error::FitSetup("model undefined next to the fitted point".into()))?;
    let mut cov = lm::covariance(&jac);
    let rescale = pb.weighting == Weighting::Uniform || pb.n_avg.is_none();
    if rescale {
        let s2 = 2.0 * cost / (n_data - n_par) as f64;
        if let Some(c) = cov.as_mut() {
            *c *= s2;
        }
    }

    // diagnose at a point where pinned parameters regain their influence
    let mut probe = p.clone();
    for k in 0..n_par {
        if at_bound[k] {
            probe[k] = pb.typical[k];
        }
    }
    let probe_jac = if probe == p {
        Some(jac.clone())
    } else {
        lm::jacobian(&resid, &probe, &pb.coords)
    };
    if let Some(pj) = probe_jac {
        let probe_cov = if probe == p {
            cov.clone()
        } else {
            lm::covariance(&pj)
        };
        if let Some((a, b)) = degenerate_pair(&pj, &probe, &pb.typical, probe_cov.as_ref()) {
            return Err(Error::DegenerateJacobian {
                first: pb.names[a].clone(),
                second: pb.names[b].clone(),
            });
        }
    }

    if !converged {
        warnings.push(if total_iter >= MAX_ITER {
            format!("fit did not converge within {MAX_ITER} iterations")
        } else {
            "fit stalled: no step lowers the objective but the gradient is above tolerance".into()
        });
    }
    if residual_rms > POOR_FIT_RMS {
        warnings.push(format!("residual rms {residual_rms:.2} exceeds {POOR_FIT_RMS} noise units: model does not describe the data"));
    }
    let at_bound_names: Vec<String> = (0..n_par)
        .filter(|k| at_bound[*k])
        .map(|k| pb.names[k].clone())
        .collect();
    for name in &at_bound_names {
        warnings.push(format!("parameter `{name}` is at its lower bound"));
    }
    let params: BTreeMap<String, f64> = pb.names.iter().cloned().zip(p.iter().copied()).collect();
    let sigmas = match (&cov, converged) {
        (Some(c), true) => Some(
            pb.names
                .iter()
                .enumerate()
                .map(|(k, n)| (n.clone(), c[(k, k)].sqrt()))
                .collect(),
        ),
        _ => None,
    };
    let covariance = cov.filter(|_| converged).map(|c| {
        (0..n_par)
            .map(|i| (0..n_par).map(|j| c[(i, j)]).collect())
            .collect()
    });
    Ok(FitResult {
        params,
        fixed,
        sigmas,
        covariance,
        free_order: pb.names.clone(),
        residual_rms,
        converged,
        n_iter: total_iter,
        at_bound: at_bound_names,
        cost_history: history,
        warnings,
    })
}
