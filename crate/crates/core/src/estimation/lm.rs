//! Levenberg–Marquardt on weighted residuals.
//!
//! Parameters are optimized in internal coordinates (log for positive
//! quantities, shifted and scaled otherwise). The Jacobian is taken by central
//! differences in natural coordinates, step max(10⁻⁶|p|, 10⁻⁸·typical), and
//! mapped through the chain rule. The
//! damped system is (JᵀJ + λ·diag JᵀJ)δ = −Jᵀr; λ is divided by 10 after an
//! accepted step and multiplied by 10 after a rejected one. The search stops
//! when every parameter not pinned at a bound has |(Jᵀr)_k| below
//! 10⁻⁸·‖J_k‖·max(‖r‖, √N), the gradient measured against the objective's own
//! scale. The √N floor is the residual norm expected from correctly weighted
//! noise, so exact data also converge.

use nalgebra::{DMatrix, DVector};

/// Relative gradient tolerance.
pub const GRAD_TOL: f64 = 1e-8;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

/// Mapping between a natural parameter and its internal coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coord {
    /// p = exp(u), with p ≥ `lower`; `typical` is the parameter's expected size.
    Log { lower: f64, typical: f64 },
    /// p = anchor + scale·u.
    Affine { anchor: f64, scale: f64 },
}

impl Coord {
    /// Log coordinate bounded below at 10⁻¹⁰ of `typical`.
    pub fn positive(typical: f64) -> Self {
        Coord::Log {
            lower: 1e-10 * typical,
            typical,
        }
    }

    pub fn natural(&self, u: f64) -> f64 {
        match *self {
            Coord::Log { .. } => u.exp(),
            Coord::Affine { anchor, scale } => anchor + scale * u,
        }
    }

    pub fn internal(&self, p: f64) -> f64 {
        match *self {
            Coord::Log { lower, .. } => p.max(lower).ln(),
            Coord::Affine { anchor, scale } => (p - anchor) / scale,
        }
    }

    fn dp_du(&self, p: f64) -> f64 {
        match *self {
            Coord::Log { .. } => p,
            Coord::Affine { scale, .. } => scale,
        }
    }

    fn lower(&self) -> f64 {
        match *self {
            Coord::Log { lower, .. } => lower,
            Coord::Affine { .. } => f64::NEG_INFINITY,
        }
    }

    fn lower_u(&self) -> f64 {
        match *self {
            Coord::Log { lower, .. } => lower.ln(),
            Coord::Affine { .. } => f64::NEG_INFINITY,
        }
    }

    fn fd_step(&self, p: f64) -> f64 {
        match *self {
            Coord::Log { typical, .. } => (1e-6 * p.abs()).max(1e-8 * typical),
            Coord::Affine { scale, .. } => 1e-6 * scale.abs(),
        }
    }
}

pub struct Outcome {
    pub p: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<f64>,
    pub at_bound: Vec<bool>,
}

/// ½‖r‖² with Neumaier-compensated summation; near the optimum the decrease
/// per step is close to the rounding error of a plain sum.
fn cost_of(r: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in r {
        let t = x * x;
        let s = sum + t;
        comp += if sum.abs() >= t {
            (sum - s) + t
        } else {
            (t - s) + sum
        };
        sum = s;
    }
    0.5 * (sum + comp)
}

/// Central-difference Jacobian ∂r/∂p in natural coordinates.
pub fn jacobian<F>(resid: &F, p: &[f64], coords: &[Coord]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = coords[k].fd_step(p[k]);
        q[k] = p[k] + h;
        let plus = resid(&q)?;
        let (minus, span) = if p[k] - h < coords[k].lower() {
            q[k] = p[k];
            (resid(&q)?, h)
        } else {
            q[k] = p[k] - h;
            (resid(&q)?, 2.0 * h)
        };
        q[k] = p[k];
        cols.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / span)
                .collect::<Vec<_>>(),
        );
    }
    let m = cols.first().map_or(0, |c| c.len());
    Some(DMatrix::from_fn(m, p.len(), |i, k| cols[k][i]))
}

/// Solves (A + λ·diag A)δ = −g over the `free` parameters.
fn damped_step(
    a: &DMatrix<f64>,
    grad: &DVector<f64>,
    free: &[usize],
    lambda: f64,
) -> Option<DVector<f64>> {
    let nf = free.len();
    let max_diag = free.iter().map(|&k| a[(k, k)]).fold(0.0, f64::max);
    let mut m = DMatrix::zeros(nf, nf);
    let mut rhs = DVector::zeros(nf);
    for (i, &ki) in free.iter().enumerate() {
        for (j, &kj) in free.iter().enumerate() {
            m[(i, j)] = a[(ki, kj)];
        }
        m[(i, i)] += lambda * a[(ki, ki)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
        rhs[i] = -grad[ki];
    }
    Some(m.cholesky()?.solve(&rhs))
}

/// Minimizes ½‖r(p)‖² starting from `p0`, with at most `max_iter` Jacobian
/// evaluations. `resid` returns `None` where the model is undefined; such
/// trial points are rejected.
pub fn minimize<F>(resid: F, p0: &[f64], coords: &[Coord], max_iter: usize) -> Outcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = p0.len();
    let lower: Vec<f64> = coords.iter().map(Coord::lower_u).collect();
    let mut u: Vec<f64> = p0.iter().zip(coords).map(|(p, c)| c.internal(*p)).collect();
    let natural =
        |u: &[f64]| -> Vec<f64> { u.iter().zip(coords).map(|(x, c)| c.natural(*x)).collect() };
    let mut p = natural(&u);
    let Some(mut r) = resid(&p) else {
        return Outcome {
            p,
            cost: f64::INFINITY,
            converged: false,
            n_iter: 0,
            cost_history: vec![],
            at_bound: vec![false; n],
        };
    };
    let r_floor = (r.len() as f64).sqrt();
    let mut cost = cost_of(&r);
    let mut history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut n_iter = 0;
    let mut pinned = vec![false; n];

    while n_iter < max_iter {
        n_iter += 1;
        let Some(jn) = jacobian(&resid, &p, coords) else {
            break;
        };
        let mut ju = jn.clone();
        for k in 0..n {
            let d = coords[k].dp_du(p[k]);
            ju.column_mut(k).scale_mut(d);
        }
        let rv = DVector::from_column_slice(&r);
        let grad = ju.tr_mul(&rv);
        let a = ju.tr_mul(&ju);
        for k in 0..n {
            pinned[k] = u[k] <= lower[k] + 1e-9 && grad[k] > 0.0;
        }
        let r_norm = (2.0 * cost).sqrt().max(r_floor);
        let small = (0..n)
            .filter(|k| !pinned[*k])
            .all(|k| grad[k].abs() <= GRAD_TOL * ju.column(k).norm() * r_norm);
        if small {
            converged = true;
            break;
        }
        let free: Vec<usize> = (0..n).filter(|k| !pinned[*k]).collect();
        let try_point = |u_new: Vec<f64>, cost: f64| {
            let p_new = natural(&u_new);
            let r_new = resid(&p_new)?;
            let c_new = cost_of(&r_new);
            (c_new < cost).then_some((u_new, p_new, r_new, c_new))
        };
        let mut accepted = None;
        while accepted.is_none() && lambda <= LAMBDA_MAX {
            match damped_step(&a, &grad, &free, lambda) {
                Some(step) => {
                    let mut u_new = u.clone();
                    for (i, &k) in free.iter().enumerate() {
                        u_new[k] = (u[k] + step[i]).max(lower[k]);
                    }
                    accepted = try_point(u_new, cost);
                    if accepted.is_some() {
                        lambda = (lambda / 10.0).max(LAMBDA_MIN);
                    } else {
                        lambda *= 10.0;
                    }
                }
                None => lambda *= 10.0,
            }
        }
        if accepted.is_none() {
            // The log map flattens the objective for parameters far below
            // their typical size; retry the damped step in natural coordinates.
            let gn = jn.tr_mul(&rv);
            let an = jn.tr_mul(&jn);
            let mut mu = LAMBDA_INIT;
            while accepted.is_none() && mu <= LAMBDA_MAX {
                if let Some(step) = damped_step(&an, &gn, &free, mu) {
                    let mut u_new = u.clone();
                    for (i, &k) in free.iter().enumerate() {
                        u_new[k] = coords[k].internal(p[k] + step[i]).max(lower[k]);
                    }
                    accepted = try_point(u_new, cost);
                }
                mu *= 10.0;
            }
            lambda = LAMBDA_INIT;
        }
        let Some((u_new, p_new, r_new, c_new)) = accepted else {
            break;
        };
        cost = c_new;
        history.push(cost);
        u = u_new;
        p = p_new;
        r = r_new;
    }

    let at_bound = (0..n).map(|k| u[k] <= lower[k] + 1e-9).collect();
    Outcome {
        p,
        cost,
        converged,
        n_iter,
        cost_history: history,
        at_bound,
    }
}

/// Parameter covariance (JᵀJ)⁻¹ from a weighted natural-space Jacobian.
pub fn covariance(j: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let info = j.tr_mul(j);
    let d: Vec<f64> = (0..info.nrows()).map(|k| info[(k, k)].sqrt()).collect();
    if d.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return None;
    }
    // equilibrate before inverting
    let scaled = DMatrix::from_fn(info.nrows(), info.ncols(), |i, k| {
        info[(i, k)] / (d[i] * d[k])
    });
    let inv = scaled.cholesky()?.inverse();
    let cov = DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, k| inv[(i, k)] / (d[i] * d[k]));
    cov.iter().all(|x| x.is_finite()).then_some(cov)
}
