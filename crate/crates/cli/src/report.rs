//! Forward-model tables against temperature and drive strength.

use std::process::ExitCode;

use anyhow::{bail, Result};
use serde::Serialize;
use sideband::constants::TWO_PI;
use sideband::device::{bose_occupancy, DeviceParams};
use sideband::dynamics::{cooling_point, final_occupancy_2nd_order, ThermalState};
use sideband::limits::{displacement_imprecision, imprecision_from_chain, LimitReport};

use crate::{to_json, write_output, Cli, Format, ReportArgs};

const DRIVE_HEADER: &str =
    "n_d,g_hz,gamma_opt_hz,gamma_total_hz,n_m,n_m_2nd,s_x_imp,n_imp,product_bound";
const TEMPERATURE_HEADER: &str = "temperature_k,n_bath,n_m";

#[derive(Serialize)]
struct DriveRow {
    n_d: f64,
    g_hz: f64,
    gamma_opt_hz: f64,
    gamma_total_hz: f64,
    n_m: f64,
    n_m_2nd: f64,
    s_x_imp: f64,
    n_imp: f64,
    product_bound: f64,
}

#[derive(Serialize)]
struct TemperatureRow {
    temperature_k: f64,
    n_bath: f64,
    n_m: f64,
}

#[derive(Serialize)]
struct Report {
    temperature: Vec<TemperatureRow>,
    drive: Vec<DriveRow>,
    /// Limits at the drive with the smallest product bound.
    limits: LimitReport,
    limits_n_d: f64,
}

/// 1, 2, 5 × 10^k up to and including `max`.
fn default_drives(max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..=12 {
        for m in [1u32, 2, 5] {
            let n = f64::from(m) * 10f64.powi(k);
            if n > max {
                return out;
            }
            out.push(n);
        }
    }
    out
}

fn temperatures(a: &ReportArgs) -> Result<Vec<f64>> {
    if !(a.t_min > 0.0 && a.t_step > 0.0 && a.t_max >= a.t_min) {
        bail!("need 0 < t_min <= t_max and t_step > 0");
    }
    let n = ((a.t_max - a.t_min) / a.t_step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a.t_min + i as f64 * a.t_step).collect())
}

fn drive_row(
    device: &DeviceParams,
    thermal: &ThermalState,
    n_d: f64,
    n_add: f64,
) -> Result<(DriveRow, LimitReport)> {
    let c = cooling_point(device, n_d, thermal)?;
    let cav = &device.cavity;
    let mech = &device.mech;
    let n_m_2nd =
        final_occupancy_2nd_order(thermal, c.g, cav.kappa(), mech.gamma_m(), mech.omega_m())?;
    let n_imp = imprecision_from_chain(
        c.g,
        cav.kappa(),
        cav.kappa_ex(),
        mech.gamma_m(),
        cav.beta(),
        n_add,
    )?;
    let limits = LimitReport::from_occupancies(mech, c.gamma_total, c.n_m, n_imp, true)?;
    let row = DriveRow {
        n_d,
        g_hz: c.g / TWO_PI,
        gamma_opt_hz: c.gamma_opt / TWO_PI,
        gamma_total_hz: c.gamma_total / TWO_PI,
        n_m: c.n_m,
        n_m_2nd,
        s_x_imp: displacement_imprecision(device, n_d, n_add)?,
        n_imp,
        product_bound: limits.product_over_hbar,
    };
    Ok((row, limits))
}

fn csv_line(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    cells.join(",") + "\n"
}

pub fn run(cli: &Cli, device: &DeviceParams, a: &ReportArgs) -> Result<ExitCode> {
    let thermal = a.thermal.state(device)?;
    let drives = if a.n_d.is_empty() {
        default_drives(a.n_d_max)
    } else {
        a.n_d.clone()
    };
    if drives.is_empty() || drives.windows(2).any(|w| w[1] <= w[0]) || drives[0] <= 0.0 {
        bail!("drive photon numbers must be positive and strictly increasing");
    }

    let mut drive = Vec::with_capacity(drives.len());
    let mut best: Option<(f64, LimitReport)> = None;
    for &n_d in &drives {
        let (row, limits) = drive_row(device, &thermal, n_d, a.n_add)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| limits.product_over_hbar < b.product_over_hbar)
        {
            best = Some((n_d, limits));
        }
        drive.push(row);
    }
    let (limits_n_d, limits) = best.expect("at least one drive");

    let mut temperature = Vec::new();
    for t in temperatures(a)? {
        let n_bath = bose_occupancy(t, device.mech.omega_m())?;
        let th = ThermalState::from_occupancies(n_bath, thermal.n_c)?;
        let c = cooling_point(device, a.calibration_n_d, &th)?;
        temperature.push(TemperatureRow {
            temperature_k: t,
            n_bath,
            n_m: c.n_m,
        });
    }

    let report = Report {
        temperature,
        drive,
        limits,
        limits_n_d,
    };
    match cli.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let text = to_json(&report)?;
            write_output(cli, "report.json", &text)?;
            print!("{text}");
        }
        Format::Csv => {
            let mut d = format!("{DRIVE_HEADER}\n");
            for r in &report.drive {
                d += &csv_line(&[
                    r.n_d,
                    r.g_hz,
                    r.gamma_opt_hz,
                    r.gamma_total_hz,
                    r.n_m,
                    r.n_m_2nd,
                    r.s_x_imp,
                    r.n_imp,
                    r.product_bound,
                ]);
            }
            let mut t = format!("{TEMPERATURE_HEADER}\n");
            for r in &report.temperature {
                t += &csv_line(&[r.temperature_k, r.n_bath, r.n_m]);
            }
            write_output(cli, "report_drive.csv", &d)?;
            write_output(cli, "report_temperature.csv", &t)?;
            let limits = to_json(&serde_json::json!({
                "n_d": report.limits_n_d,
                "limits": report.limits,
            }))?;
            write_output(cli, "limits.json", &limits)?;
            print!("{d}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_two_five_series() {
        let d = default_drives(2e5);
        assert_eq!(&d[..4], &[1.0, 2.0, 5.0, 10.0]);
        assert_eq!(*d.last().unwrap(), 2e5);
        assert!(d.contains(&1e5));
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }
}
