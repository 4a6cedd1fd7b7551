use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{trapezoid, SpectrumTrace, Unit};
use crate::device::{zero_point_motion, MechanicalMode};
use crate::error::{Error, Result};

/// Minimum peak height over floor noise for a peak to count as resolved.
pub const MIN_PEAK_SNR: f64 = 3.0;

/// How the peak area relates to the occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPoint {
    /// Direct displacement spectrum: area = x_zp²(2n_m + 1).
    Included,
    /// Red-sideband output converted to displacement after floor subtraction:
    /// area = 2x_zp²n_m.
    Excluded,
}

/// Background-subtracted area of the mechanical peak in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakArea {
    /// ∫(S − floor) df including the tail correction, in trace unit × Hz.
    pub area: f64,
    /// Portion of `area` added for the Lorentzian tails beyond the grid.
    pub tail_correction: f64,
    pub floor: f64,
    pub height: f64,
    /// Robust standard deviation of the floor bins.
    pub noise: f64,
    pub snr: f64,
    pub center_hz: f64,
    pub fwhm_hz: f64,
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

/// Half-maximum crossing, walking outward from `peak`.
fn crossing(f: &[f64], y: &[f64], peak: usize, half: f64, left: bool) -> Option<f64> {
    let mut i = peak;
    loop {
        let j = if left { i.checked_sub(1)? } else { i + 1 };
        if j >= y.len() {
            return None;
        }
        if y[j] < half {
            let t = (y[i] - half) / (y[i] - y[j]);
            return Some(f[i] + t * (f[j] - f[i]));
        }
        i = j;
    }
}

/// Index of the first maximal element.
pub(crate) fn leftmost_max(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

struct Shape {
    height: f64,
    center_hz: f64,
    fwhm_hz: f64,
}

fn shape(f: &[f64], y: &[f64]) -> Shape {
    let peak = leftmost_max(y);
    let height = y[peak];
    let half = height / 2.0;
    let lo = crossing(f, y, peak, half, true);
    let hi = crossing(f, y, peak, half, false);
    let (center_hz, fwhm_hz) = match (lo, hi) {
        (Some(a), Some(b)) => (0.5 * (a + b), b - a),
        (Some(a), None) => (f[peak], 2.0 * (f[peak] - a)),
        (None, Some(b)) => (f[peak], 2.0 * (b - f[peak])),
        (None, None) => (f[peak], f[f.len() - 1] - f[0]),
    };
    Shape {
        height,
        center_hz,
        fwhm_hz,
    }
}

/// Integrates the mechanical peak of a trace in its own unit.
///
/// The floor is `floor_estimate` if given. Otherwise it starts as the median
/// of the outer quarter of bins on each side and is refined by removing the
/// Lorentzian tail of the measured peak from those bins. The noise is the MAD
/// of the outer bins. The trapezoidal area is extended by the analytic tails
/// of a Lorentzian with the measured FWHM whose height makes its in-grid area
/// match.
pub fn peak_area(trace: &SpectrumTrace, floor_estimate: Option<f64>) -> Result<PeakArea> {
    let f = trace.freq_hz();
    let v = trace.values();
    let q = (v.len() / 4).max(1);
    let outer_idx: Vec<usize> = (0..q).chain(v.len() - q..v.len()).collect();
    let mut outer: Vec<f64> = outer_idx.iter().map(|&i| v[i]).collect();
    let centre = median(&mut outer);
    let mut dev: Vec<f64> = outer.iter().map(|x| (x - centre).abs()).collect();
    let noise = 1.4826 * median(&mut dev);

    let mut floor = match floor_estimate {
        Some(fl) if fl.is_finite() => fl,
        Some(fl) => {
            return Err(Error::domain(format!(
                "floor estimate must be finite, got {fl}"
            )))
        }
        None => centre,
    };
    let mut y: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut s = shape(f, &y);
    if floor_estimate.is_none() && s.height > 0.0 && s.fwhm_hz > 0.0 {
        for _ in 0..4 {
            let g = s.fwhm_hz / 2.0;
            let mut resid: Vec<f64> = outer_idx
                .iter()
                .map(|&i| {
                    let x = (f[i] - s.center_hz) / g;
                    v[i] - s.height / (1.0 + x * x)
                })
                .collect();
            floor = median(&mut resid);
            y = v.iter().map(|x| x - floor).collect();
            s = shape(f, &y);
        }
    }

    let height = s.height;
    let snr = if height <= 0.0 {
        0.0
    } else if noise > 0.0 {
        height / noise
    } else {
        f64::INFINITY
    };
    if !(snr >= MIN_PEAK_SNR) {
        return Err(Error::NoPeak { snr, height, noise });
    }

    let inner = trapezoid(f, &y);
    let (center_hz, fwhm_hz) = (s.center_hz, s.fwhm_hz);
    let g = fwhm_hz / 2.0;
    let (f_lo, f_hi) = (f[0], f[f.len() - 1]);
    let mut tail_correction = 0.0;
    if g > 0.0 {
        let a_hi = ((f_hi - center_hz) / g).atan();
        let a_lo = ((center_hz - f_lo) / g).atan();
        let h = inner / (g * (a_hi + a_lo));
        tail_correction = h * g * ((FRAC_PI_2 - a_hi) + (FRAC_PI_2 - a_lo));
    }

    Ok(PeakArea {
        area: inner + tail_correction,
        tail_correction,
        floor,
        height,
        noise,
        snr,
        center_hz,
        fwhm_hz,
    })
}

/// Occupancy n_m from the area of a displacement peak (m²/Hz).
pub fn integrate_mech_peak(
    trace: &SpectrumTrace,
    mech: &MechanicalMode,
    floor_estimate: Option<f64>,
    zero_point: ZeroPoint,
) -> Result<f64> {
    trace.expect_unit(Unit::M2PerHz)?;
    let pa = peak_area(trace, floor_estimate)?;
    let x2 = zero_point_motion(mech).powi(2);
    Ok(match zero_point {
        ZeroPoint::Included => pa.area / (2.0 * x2) - 0.5,
        ZeroPoint::Excluded => pa.area / (2.0 * x2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TWO_PI;
    use crate::device::DeviceParams;
    use crate::spectra::{thermal_displacement_psd, GridSpec, TraceMeta};

    fn with_floor(t: &SpectrumTrace, floor: f64) -> SpectrumTrace {
        t.with_values(t.values().iter().map(|v| v + floor).collect(), t.unit())
            .unwrap()
    }

    #[test]
    fn thermal_round_trip() {
        let mech = DeviceParams::reference().mech;
        let gt = mech.gamma_m();
        let hw = gt / TWO_PI / 2.0;
        let grid = GridSpec::uniform(mech.omega_m() / TWO_PI, 200.0 * hw, 4001)
            .build()
            .unwrap();
        let s = thermal_displacement_psd(&grid, &mech, 30.0, gt).unwrap();
        let floor = 1e-3 * s.values().iter().cloned().fold(0.0, f64::max);
        let t = with_floor(&s, floor);
        let n = integrate_mech_peak(&t, &mech, None, ZeroPoint::Included).unwrap();
        assert!((n - 30.0).abs() / 30.0 < 0.005, "{n}");
        let pa = peak_area(&t, None).unwrap();
        assert!((pa.fwhm_hz / (2.0 * hw) - 1.0).abs() < 1e-3);
        assert!((pa.center_hz - mech.omega_m() / TWO_PI).abs() < 1e-3 * hw);
    }

    #[test]
    fn truncated_grid_correction() {
        let mech = DeviceParams::reference().mech;
        let gt = TWO_PI * 50.0;
        let hw = 25.0;
        let grid = GridSpec::uniform(mech.omega_m() / TWO_PI, 1.5 * 2.0 * hw, 301)
            .build()
            .unwrap();
        let s = thermal_displacement_psd(&grid, &mech, 30.0, gt).unwrap();
        let raw = trapezoid(s.freq_hz(), s.values());
        let x2 = zero_point_motion(&mech).powi(2);
        let expect = x2 * 61.0;
        assert!((raw - expect).abs() / expect > 0.1);
        let n = integrate_mech_peak(&s, &mech, Some(0.0), ZeroPoint::Included).unwrap();
        assert!((n - 30.0).abs() / 30.0 < 0.02, "{n}");
    }

    #[test]
    fn zero_signal_is_rejected() {
        let f: Vec<f64> = (0..64).map(|i| 1e7 + i as f64).collect();
        let t = SpectrumTrace::new(
            f.clone(),
            vec![1e-30; 64],
            Unit::M2PerHz,
            TraceMeta::default(),
        )
        .unwrap();
        let mech = DeviceParams::reference().mech;
        assert!(matches!(
            integrate_mech_peak(&t, &mech, None, ZeroPoint::Included),
            Err(Error::NoPeak { .. })
        ));
        // a bump buried in scatter
        let v: Vec<f64> = (0..64)
            .map(|i| if i % 2 == 0 { 1.0 } else { 2.0 } + if i == 32 { 1.0 } else { 0.0 })
            .collect();
        let t = SpectrumTrace::new(f, v, Unit::Quanta, TraceMeta::default()).unwrap();
        assert!(matches!(peak_area(&t, None), Err(Error::NoPeak { .. })));
    }

    #[test]
    fn ties_resolve_left() {
        assert_eq!(leftmost_max(&[0.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(leftmost_max(&[3.0, 3.0]), 0);
    }

    #[test]
    fn unit_is_checked() {
        let f: Vec<f64> = (0..64).map(|i| 1e7 + i as f64).collect();
        let t = SpectrumTrace::new(f, vec![1.0; 64], Unit::Quanta, TraceMeta::default()).unwrap();
        let mech = DeviceParams::reference().mech;
        assert!(matches!(
            integrate_mech_peak(&t, &mech, None, ZeroPoint::Excluded),
            Err(Error::UnitMismatch { .. })
        ));
    }
}
