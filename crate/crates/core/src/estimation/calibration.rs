use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::device::{bose_occupancy, zero_point_motion, DeviceParams};
use crate::dynamics::DriveConfig;
use crate::error::{Error, Result};
use crate::spectra::{peak_area, SpectrumTrace, Unit};

/// Fewest temperatures accepted by [`calibrate_coupling`].
pub const MIN_TEMPERATURES: usize = 4;
/// Residual threshold, in robust standard deviations, for rejecting a point.
pub const OUTLIER_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub temperature: f64,
    /// Bath occupancy at the mechanical frequency.
    pub n_bath: f64,
    /// Sideband peak area (W).
    pub area: f64,
    pub area_sigma: f64,
    /// Excluded from the final regression.
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Frequency pull G (rad/s per m).
    pub g_pull: f64,
    pub g_pull_sigma: f64,
    /// G/2π (Hz per m).
    pub g_pull_hz_per_m: f64,
    pub g_pull_sigma_hz_per_m: f64,
    pub linearity_r2: f64,
    /// Area per bath quantum (W).
    pub slope: f64,
    pub slope_sigma: f64,
    pub intercept: f64,
    pub intercept_sigma: f64,
    /// Intercept expressed in quanta, intercept/slope.
    pub intercept_quanta: f64,
    /// Ratio Γ_m'/Γ_m applied for the residual optical damping of the probe.
    pub damping_correction: f64,
    pub points: Vec<CalibrationPoint>,
    pub warnings: Vec<String>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Uncertainty of a peak area from averaged-periodogram noise: bin scatter
/// integrated over the trace plus the floor-estimate error times the span.
fn area_sigma(trace: &SpectrumTrace, noise: f64) -> f64 {
    let f = trace.freq_hz();
    let v = trace.values();
    let per_bin = |i: usize| match trace.meta.n_avg {
        Some(n) => v[i] / (n as f64).sqrt(),
        None => noise,
    };
    let mut var = 0.0;
    for i in 0..f.len() {
        let lo = if i == 0 {
            f[0]
        } else {
            0.5 * (f[i - 1] + f[i])
        };
        let hi = if i + 1 == f.len() {
            f[i]
        } else {
            0.5 * (f[i] + f[i + 1])
        };
        var += ((hi - lo) * per_bin(i)).powi(2);
    }
    let n_floor = 2 * (f.len() / 4).max(1);
    let floor_sigma = 1.2533 * noise / (n_floor as f64).sqrt();
    let span = f[f.len() - 1] - f[0];
    (var + (floor_sigma * span).powi(2)).sqrt()
}

struct Line {
    slope: f64,
    intercept: f64,
    cov: [[f64; 2]; 2],
    r2: f64,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<Line> {
    let sw: f64 = w.iter().sum();
    let sx: f64 = x.iter().zip(w).map(|(a, w)| w * a).sum();
    let sy: f64 = y.iter().zip(w).map(|(a, w)| w * a).sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, w)| w * a * a).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), w)| w * a * b).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::domain("temperatures do not span a range"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let n = x.len() as f64;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), w)| w * (b - intercept - slope * a).powi(2))
        .sum();
    let inflate = if n > 2.0 {
        (chi2 / (n - 2.0)).max(1.0)
    } else {
        1.0
    };
    let cov = [
        [sxx / det * inflate, -sx / det * inflate],
        [-sx / det * inflate, sw / det * inflate],
    ];
    let ybar = sy / sw;
    let ss_tot: f64 = y.iter().zip(w).map(|(b, w)| w * (b - ybar).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - chi2 / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(Line {
        slope,
        intercept,
        cov,
        r2,
    })
}

/// Calibrates the frequency pull G from thermal sideband areas.
///
/// Each trace (W/Hz) is a weak red-sideband measurement at one cryostat
/// temperature. Peak areas are regressed on the bath occupancy n(T, Ω_m):
/// a Theil–Sen line sets a robust scale, points more than 5 robust σ away are
/// excluded, and a weighted least-squares line is fitted to the rest. With
/// area = P_o(Gκ_exx_zp/κΩ_m)²·n_m and the small residual optical damping
/// n_m = n·Γ_m/(Γ_m + 4G²x_zp²n_d/κ) solved self-consistently,
/// G = (κΩ_m/κ_exx_zp)·√(slope·Γ_m'/Γ_m / P_o).
pub fn calibrate_coupling(
    sweep: &[(f64, SpectrumTrace)],
    device: &DeviceParams,
    drive: &DriveConfig,
    p_out: f64,
) -> Result<CalibrationResult> {
    if sweep.len() < MIN_TEMPERATURES {
        return Err(Error::domain(format!(
            "calibration needs at least {MIN_TEMPERATURES} temperatures, got {}",
            sweep.len()
        )));
    }
    if !(p_out > 0.0 && p_out.is_finite()) {
        return Err(Error::domain(format!(
            "output drive power must be positive, got {p_out}"
        )));
    }
    let om = device.mech.omega_m();
    let mut points = Vec::with_capacity(sweep.len());
    for (t, trace) in sweep {
        trace.expect_unit(Unit::WattsPerHz)?;
        let pa = peak_area(trace, None)?;
        points.push(CalibrationPoint {
            temperature: *t,
            n_bath: bose_occupancy(*t, om)?,
            area: pa.area,
            area_sigma: area_sigma(trace, pa.noise),
            outlier: false,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.n_bath).collect();
    let y: Vec<f64> = points.iter().map(|p| p.area).collect();

    let mut slopes = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    if slopes.is_empty() {
        return Err(Error::domain("temperatures do not span a range"));
    }
    let ts_slope = median(&mut slopes);
    let mut offs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - ts_slope * a).collect();
    let ts_icept = median(&mut offs);
    let resid: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(a, b)| b - ts_icept - ts_slope * a)
        .collect();
    let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    let robust = 1.4826 * median(&mut abs);
    let ymax = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut warnings = Vec::new();
    for (p, r) in points.iter_mut().zip(&resid) {
        let scale = p.area_sigma.max(robust).max(1e-9 * ymax);
        if r.abs() > OUTLIER_SIGMAS * scale {
            p.outlier = true;
            warnings.push(format!(
                "point at T = {} K deviates by {:.1} sigma and was excluded",
                p.temperature,
                r.abs() / scale
            ));
        }
    }
    let keep: Vec<usize> = (0..points.len()).filter(|i| !points[*i].outlier).collect();
    if keep.len() < 3 {
        return Err(Error::domain(
            "fewer than 3 points remain after outlier rejection",
        ));
    }
    let xs: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let weighted = keep.iter().all(|&i| points[i].area_sigma > 0.0);
    let ws: Vec<f64> = keep
        .iter()
        .map(|&i| {
            if weighted {
                points[i].area_sigma.powi(-2)
            } else {
                1.0
            }
        })
        .collect();
    let line = weighted_line(&xs, &ys, &ws)?;
    if !(line.slope > 0.0) {
        return Err(Error::domain(format!(
            "sideband area does not grow with temperature (slope {:e})",
            line.slope
        )));
    }

    let x_zp = zero_point_motion(&device.mech);
    let kappa = device.cavity.kappa();
    let gamma_m = device.mech.gamma_m();
    let n_d = drive.photons(&device.cavity)?;
    let prefactor = kappa * om / (device.cavity.kappa_ex() * x_zp);
    let mut g = prefactor * (line.slope / p_out).sqrt();
    let mut correction = 1.0;
    for _ in 0..100 {
        correction = 1.0 + 4.0 * g * g * x_zp * x_zp * n_d / (kappa * gamma_m);
        let next = prefactor * (line.slope * correction / p_out).sqrt();
        let done = (next - g).abs() <= 1e-14 * next;
        g = next;
        if done {
            break;
        }
    }
    if correction > 1.2 {
        warnings.push(format!(
            "probe drive damps the mode by {:.0}%: not in the weak-drive regime",
            100.0 * (correction - 1.0)
        ));
    }
    let slope_sigma = line.cov[1][1].sqrt();
    let intercept_sigma = line.cov[0][0].sqrt();
    let g_sigma = g * slope_sigma / (2.0 * line.slope);
    if line.r2 < 0.99 {
        warnings.push(format!(
            "linearity r2 = {:.4} < 0.99: mode may not be thermalized with the cryostat",
            line.r2
        ));
    }
    if line.intercept < -2.0 * intercept_sigma {
        warnings.push(format!(
            "negative intercept {:e} W is {:.1} sigma below zero",
            line.intercept,
            -line.intercept / intercept_sigma
        ));
    }
    Ok(CalibrationResult {
        g_pull: g,
        g_pull_sigma: g_sigma,
        g_pull_hz_per_m: g / TWO_PI,
        g_pull_sigma_hz_per_m: g_sigma / TWO_PI,
        linearity_r2: line.r2,
        slope: line.slope,
        slope_sigma,
        intercept: line.intercept,
        intercept_sigma,
        intercept_quanta: line.intercept / line.slope,
        damping_correction: correction,
        points,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DriveStrength;
    use crate::spectra::TraceMeta;

    #[test]
    fn line_fit_exact() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 0.5).collect();
        let l = weighted_line(&x, &y, &[1.0; 4]).unwrap();
        assert!((l.slope - 3.0).abs() < 1e-12 && (l.intercept - 0.5).abs() < 1e-12);
        assert_eq!(l.r2, 1.0);
    }

    /// A noiseless Lorentzian trace in W/Hz with the requested area.
    fn peak_trace(area: f64) -> SpectrumTrace {
        let (c, w, floor) = (10.56e6, 40.0, 1e-22);
        let f: Vec<f64> = (0..4001).map(|i| c - 4000.0 + 2.0 * i as f64).collect();
        let v = f
            .iter()
            .map(|x| {
                floor + 2.0 * area / (std::f64::consts::PI * w) * 400.0 / ((x - c).powi(2) + 400.0)
            })
            .collect();
        SpectrumTrace::new(f, v, Unit::WattsPerHz, TraceMeta::default()).unwrap()
    }

    #[test]
    fn exactly_linear_areas() {
        let dev = DeviceParams::reference();
        let drive = DriveConfig::red_sideband(&dev, DriveStrength::Photons(3.0)).unwrap();
        let temps = [0.05, 0.1, 0.15, 0.2, 0.25];
        let a = 1e-20;
        let sweep: Vec<(f64, SpectrumTrace)> = temps
            .iter()
            .map(|t| {
                let n = bose_occupancy(*t, dev.mech.omega_m()).unwrap();
                (*t, peak_trace(a * (n + 0.5)))
            })
            .collect();
        let r = calibrate_coupling(&sweep, &dev, &drive, 1e-15).unwrap();
        assert!(r.linearity_r2 > 1.0 - 1e-9);
        assert!((r.slope / a - 1.0).abs() < 1e-3, "{}", r.slope / a);
        assert!(
            (r.intercept_quanta - 0.5).abs() < 1e-3,
            "{}",
            r.intercept_quanta
        );
        assert!(r.points.iter().all(|p| !p.outlier));
    }

    #[test]
    fn too_few_temperatures() {
        let dev = DeviceParams::reference();
        let drive = DriveConfig::red_sideband(&dev, DriveStrength::Photons(3.0)).unwrap();
        let sweep: Vec<(f64, SpectrumTrace)> = (0..3)
            .map(|i| (0.1 + i as f64 * 0.05, peak_trace(1e-20)))
            .collect();
        assert!(calibrate_coupling(&sweep, &dev, &drive, 1e-15).is_err());
    }
}
