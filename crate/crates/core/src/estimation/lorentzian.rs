use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::Coord;
use super::{solve, FitResult, Problem, Weighting};
use crate::error::Result;
use crate::spectra::{leftmost_max, peak_area, SpectrumTrace};

/// Options for [`fit_lorentzian`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LorentzianOptions {
    pub weighting: Weighting,
    /// Hold the background at this value instead of fitting it.
    pub fixed_floor: Option<f64>,
}

/// floor + (2A/πw)·(w/2)²/((f − c)² + (w/2)²): a peak of area `area` and FWHM
/// `fwhm` (both in the units of `f`) on a flat background.
pub fn lorentzian(f: f64, center: f64, fwhm: f64, area: f64, floor: f64) -> f64 {
    let hw = 0.5 * fwhm;
    floor + 2.0 * area / (PI * fwhm) * hw * hw / ((f - center) * (f - center) + hw * hw)
}

/// Fits a single Lorentzian on a flat floor.
///
/// Free parameters are `center`, `fwhm`, `area` and, unless fixed, `floor`,
/// in Hz and trace units. The start point is the leftmost maximal bin, the
/// background and half-maximum width measured by
/// [`peak_area`](crate::spectra::peak_area), and the trapezoidal area.
pub fn fit_lorentzian(trace: &SpectrumTrace, opts: &LorentzianOptions) -> Result<FitResult> {
    let pa = peak_area(trace, opts.fixed_floor)?;
    let f = trace.freq_hz();
    let c0 = f[leftmost_max(trace.values())];
    let w0 = pa.fwhm_hz;
    let a0 = pa.area.max(pa.height * w0);
    let fl0 = pa.floor;

    let mut names = vec!["center".to_string(), "fwhm".to_string(), "area".to_string()];
    let mut coords = vec![
        Coord::Affine {
            anchor: c0,
            scale: w0,
        },
        Coord::positive(w0),
        Coord::positive(a0),
    ];
    let mut p0 = vec![c0, w0, a0];
    let mut typical = vec![w0, w0, a0];
    let mut fixed = BTreeMap::new();
    match opts.fixed_floor {
        Some(fl) => {
            fixed.insert("floor".to_string(), fl);
        }
        None => {
            names.push("floor".into());
            let scale = fl0.abs().max(1e-3 * pa.height);
            coords.push(Coord::Affine { anchor: fl0, scale });
            p0.push(fl0);
            typical.push(scale);
        }
    }
    let fixed_floor = opts.fixed_floor;
    let model = |p: &[f64]| -> Option<Vec<f64>> {
        let floor = fixed_floor.unwrap_or_else(|| p[3]);
        let v: Vec<f64> = f
            .iter()
            .map(|x| lorentzian(*x, p[0], p[1], p[2], floor))
            .collect();
        v.iter().all(|x| x.is_finite()).then_some(v)
    };
    let pb = Problem {
        names,
        coords,
        p0,
        typical,
        data: trace.values(),
        n_avg: trace.meta.n_avg,
        weighting: opts.weighting,
        model: &model,
    };
    solve(&pb, fixed, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::spectra::{TraceMeta, Unit};

    fn trace(c: f64, w: f64, a: f64, fl: f64, n: usize, span: f64) -> SpectrumTrace {
        let f: Vec<f64> = (0..n)
            .map(|i| c - span + 2.0 * span * i as f64 / (n - 1) as f64)
            .collect();
        let v = f.iter().map(|x| lorentzian(*x, c, w, a, fl)).collect();
        SpectrumTrace::new(f, v, Unit::Quanta, TraceMeta::default()).unwrap()
    }

    #[test]
    fn shape() {
        let (c, w, a) = (10.0, 2.0, 3.0);
        assert!((lorentzian(c, c, w, a, 0.0) - 2.0 * a / (PI * w)).abs() < 1e-15);
        assert!((lorentzian(c + 1.0, c, w, a, 0.0) - a / (PI * w)).abs() < 1e-15);
    }

    #[test]
    fn noiseless_recovery() {
        let t = trace(10.56e6 + 3.3, 5.0, 40.0, 2.6, 801, 100.0);
        let r = fit_lorentzian(&t, &LorentzianOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.warnings);
        let rel = |k: &str, v: f64| (r.params[k] - v).abs() / v.abs();
        assert!((r.params["center"] - (10.56e6 + 3.3)).abs() < 1e-6 * 5.0);
        assert!(rel("fwhm", 5.0) < 1e-6);
        assert!(rel("area", 40.0) < 1e-6);
        assert!(rel("floor", 2.6) < 1e-6);
        assert!(r.residual_rms < 1e-6);
        assert!(r
            .cost_history
            .iter()
            .all(|h| h.windows(2).all(|w| w[1] <= w[0])));
    }

    #[test]
    fn fixed_floor() {
        let t = trace(1e6, 5.0, 40.0, 2.6, 64, 20.0);
        let r = fit_lorentzian(
            &t,
            &LorentzianOptions {
                fixed_floor: Some(2.6),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.params.len(), 3);
        assert_eq!(r.fixed["floor"], 2.6);
        assert!((r.params["area"] - 40.0).abs() < 1e-6 * 40.0);
    }

    #[test]
    fn flat_trace_has_no_peak() {
        let f: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let t = SpectrumTrace::new(f, vec![1.0; 64], Unit::Quanta, TraceMeta::default()).unwrap();
        assert!(matches!(
            fit_lorentzian(&t, &LorentzianOptions::default()),
            Err(Error::NoPeak { .. })
        ));
    }
}
