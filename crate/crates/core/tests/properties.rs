use proptest::prelude::*;
use sideband::constants::hz_to_rad;
use sideband::device::{
    bose_occupancy, temperature_for_occupancy, zero_point_motion, DeviceParams, MechanicalMode,
};
use sideband::dynamics::{
    final_occupancy, final_occupancy_2nd_order, input_power_for_photons, intracavity_photons,
    sideband_rates, DriveConfig, DriveStrength, ThermalState,
};
use sideband::estimation::{fit_lorentzian, lorentzian, LorentzianOptions, Weighting};
use sideband::limits::{
    effective_added_noise, heisenberg_product, imprecision_asymptote, imprecision_from_chain,
    total_force_psd, MeasurementChain,
};
use sideband::spectra::{
    check_stability, displacement_from_output, integrate_mech_peak, output_noise_density,
    output_noise_spectrum, quanta_reference_omega, sideband_output_power, GridSpec, ModelParams,
    SpectrumTrace, TraceMeta, Unit, ZeroPoint,
};
use sideband::synth::{add_noise, generate_spectrum, NoiseConfig};

fn reference_params(n_d: f64, n_m_t: f64, n_c: f64, n_add: f64) -> ModelParams {
    let th = ThermalState::from_occupancies(n_m_t, n_c).unwrap();
    ModelParams::from_device(&DeviceParams::reference(), n_d, &th, n_add).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// device

proptest! {
    #[test]
    fn x_zp_scales_inverse_sqrt(
        om in hz_to_rad(1e5)..hz_to_rad(1e8),
        gm in 1.0..1e4f64,
        m in 1e-16..1e-9f64,
    ) {
        let a = MechanicalMode::new(om, gm, m).unwrap();
        let b = MechanicalMode::new(2.0 * om, gm, 2.0 * m).unwrap();
        prop_assert!(rel(zero_point_motion(&b), 0.5 * zero_point_motion(&a)) < 1e-14);
    }

    #[test]
    fn bose_monotone(t in 1e-4..10.0f64, om in hz_to_rad(1e5)..hz_to_rad(1e10)) {
        let n = bose_occupancy(t, om).unwrap();
        prop_assert!(bose_occupancy(t * 1.01, om).unwrap() > n);
        prop_assert!(bose_occupancy(t, om * 1.01).unwrap() < n);
    }

    #[test]
    fn temperature_inverts_bose(t in 1e-3..10.0f64, om in hz_to_rad(1e5)..hz_to_rad(1e9)) {
        let n = bose_occupancy(t, om).unwrap();
        prop_assert!(rel(temperature_for_occupancy(n, om).unwrap(), t) < 1e-10);
    }
}

// dynamics

proptest! {
    #[test]
    fn eq2_weak_coupling_equivalence(
        kappa_hz in 1e4..5e5f64,
        gm_hz in 1.0..1e3f64,
        frac in 0.0..1.0f64,
        n_t in 0.0..1e3f64,
    ) {
        let om = hz_to_rad(10.56e6);
        let kappa = hz_to_rad(kappa_hz);
        let gm = hz_to_rad(gm_hz);
        let g = frac * kappa / 100.0;
        let th = ThermalState::from_occupancies(n_t, 0.0).unwrap();
        let n = final_occupancy(&th, g, kappa, gm).unwrap();
        let gamma = sideband_rates(g, kappa, -om, om).unwrap().net();
        let expect = n_t * gm / (gm + gamma);
        prop_assert!((n - expect).abs() <= 1e-3 * expect.max(f64::MIN_POSITIVE));
    }

    // The first-order occupancy is non-increasing in g exactly when n_c·κ ≤ n^T(κ − Γ_m).
    #[test]
    fn occupancy_non_increasing_in_g(
        n_t in 0.0..1e3f64,
        c in 0.0..1.0f64,
        g1 in 0.0..1e6f64,
        dg in 0.0..1e6f64,
    ) {
        let (kappa, gm) = (hz_to_rad(200e3), hz_to_rad(32.0));
        let th = ThermalState::from_occupancies(n_t, c * n_t * (1.0 - gm / kappa)).unwrap();
        let a = final_occupancy(&th, g1, kappa, gm).unwrap();
        let b = final_occupancy(&th, g1 + dg, kappa, gm).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
    }

    #[test]
    fn cavity_floor(n_t in 0.0..1e3f64, c in 0.0..1.0f64, g in 0.0..1e7f64) {
        let (kappa, gm) = (hz_to_rad(200e3), hz_to_rad(32.0));
        let th = ThermalState::from_occupancies(n_t, c * n_t).unwrap();
        prop_assert!(final_occupancy(&th, g, kappa, gm).unwrap() >= th.n_c * (1.0 - 1e-12));
    }

    #[test]
    fn second_order_dominates(
        n_t in 0.0..1e3f64,
        n_c in 0.0..10.0f64,
        g in 0.0..1e7f64,
        kappa_hz in 1e3..1e6f64,
        gm_hz in 0.1..1e3f64,
    ) {
        let th = ThermalState::from_occupancies(n_t, n_c).unwrap();
        let (kappa, gm, om) = (hz_to_rad(kappa_hz), hz_to_rad(gm_hz), hz_to_rad(10.56e6));
        let first = final_occupancy(&th, g, kappa, gm).unwrap();
        let second = final_occupancy_2nd_order(&th, g, kappa, gm, om).unwrap();
        prop_assert!(second >= first);
    }

    #[test]
    fn photons_power_inverse(n_d in 0.0..1e7f64, det_hz in -2e7..2e7f64) {
        let dev = DeviceParams::reference();
        let drive = DriveConfig::new(&dev.cavity, hz_to_rad(det_hz), DriveStrength::Photons(n_d)).unwrap();
        let p = input_power_for_photons(n_d, &drive, &dev.cavity).unwrap();
        let back = intracavity_photons(p, &drive, &dev.cavity).unwrap();
        prop_assert!((back - n_d).abs() <= 1e-12 * n_d);
    }
}

#[test]
fn monotonicity_needs_margin_below_bath() {
    // n_c just below n^T but above n^T(1 − Γ_m/κ): occupancy rises with g
    let (kappa, gm) = (hz_to_rad(200e3), hz_to_rad(32.0));
    let th = ThermalState::from_occupancies(40.0, 40.0 * (1.0 - 0.5 * gm / kappa)).unwrap();
    let a = final_occupancy(&th, 1e3, kappa, gm).unwrap();
    let b = final_occupancy(&th, 1e5, kappa, gm).unwrap();
    assert!(b > a);
}

// spectra

fn model_params() -> impl Strategy<Value = ModelParams> {
    (
        1.0..2e5f64,
        0.0..200.0f64,
        0.0..1.0f64,
        0.0..5.0f64,
        -0.5..0.5f64,
    )
        .prop_map(|(n_d, n_t, n_c, n_add, det)| {
            let mut p = reference_params(n_d, n_t, n_c, n_add);
            p.delta_tilde = det * p.kappa;
            p
        })
}

proptest! {
    #[test]
    fn floor_bound(p in model_params(), x in -50.0..50.0f64) {
        prop_assume!(check_stability(&p).is_ok());
        let floor = p.floor();
        prop_assert!(output_noise_density(x * p.kappa, &p) >= floor * (1.0 - 1e-14));
        for d in [-1e3 * p.kappa, 1e3 * p.kappa] {
            let s = output_noise_density(d, &p);
            prop_assert!(s >= floor * (1.0 - 1e-14));
            prop_assert!(s - floor <= 1e-5 * floor.max(1.0), "{} above floor", s - floor);
        }
    }

    #[test]
    fn symmetric_at_optimal_detuning(p in model_params(), x in 0.0..20.0f64) {
        let p = ModelParams { delta_tilde: 0.0, ..p };
        let a = output_noise_density(x * p.kappa, &p);
        let b = output_noise_density(-x * p.kappa, &p);
        prop_assert!(rel(a, b) <= 1e-12);
    }

    #[test]
    fn unit_round_trip(values in prop::collection::vec(1e-3..1e6f64, 8..64), w_hz in 1e9..2e10f64) {
        let f: Vec<f64> = (0..values.len()).map(|i| 1e7 + i as f64).collect();
        let q = SpectrumTrace::new(f, values.clone(), Unit::Quanta, TraceMeta::default()).unwrap();
        let w = hz_to_rad(w_hz);
        let back = q.to_watts_per_hz(w).unwrap().to_quanta(w).unwrap();
        for (a, b) in back.values().iter().zip(&values) {
            prop_assert!(rel(*a, *b) <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn peak_splitting(ratio in 1.5..4.0f64, n_c in 0.1..1.0f64, n_t in 0.0..100.0f64) {
        let base = reference_params(1.0, n_t, n_c, 2.1);
        let p = ModelParams { g: ratio * base.kappa / 2.0, ..base };
        let n = 40_001;
        let d: Vec<f64> = (0..n).map(|i| (i as f64 / (n - 1) as f64 - 0.5) * 6.0 * p.g).collect();
        let y: Vec<f64> = d.iter().map(|x| output_noise_density(*x, &p)).collect();
        let mut maxima: Vec<(f64, f64)> = (1..n - 1)
            .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
            .map(|i| (y[i], d[i]))
            .collect();
        maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
        prop_assert!(maxima.len() >= 2);
        let split = (maxima[0].1 - maxima[1].1).abs();
        prop_assert!(rel(split, 2.0 * p.g) < 0.05, "split/2g = {}", split / (2.0 * p.g));
    }

    #[test]
    fn area_matches_occupancy(n_d in 1.0..300.0f64, n_t in 5.0..200.0f64) {
        let dev = DeviceParams::reference();
        let p = reference_params(n_d, n_t, 0.0, 2.1);
        let freqs = GridSpec::mechanical_peak(&p).build().unwrap();
        let q = output_noise_spectrum(&freqs, &p).unwrap();
        let w = q.to_watts_per_hz(quanta_reference_omega(&dev)).unwrap();
        let drive = DriveConfig::red_sideband(&dev, DriveStrength::Photons(n_d)).unwrap();
        let x = displacement_from_output(&w, &dev, &drive, sideband_output_power(&dev, n_d)).unwrap();
        let n = integrate_mech_peak(&x, &dev.mech, None, ZeroPoint::Excluded).unwrap();
        let th = ThermalState::from_occupancies(n_t, 0.0).unwrap();
        let expect = final_occupancy(&th, p.g, p.kappa, p.gamma_m).unwrap();
        prop_assert!(rel(n, expect) < 0.01, "{n} vs {expect}");
    }
}

// limits

proptest! {
    #[test]
    fn added_noise_decreasing_in_eta(n_add in 0.0..50.0f64, eta in 0.01..1.0f64, k in 0.01..0.99f64) {
        let hi = effective_added_noise(&MeasurementChain::new(n_add, eta).unwrap()).unwrap();
        let lo = effective_added_noise(&MeasurementChain::new(n_add, eta * k).unwrap()).unwrap();
        prop_assert!(lo > hi);
        prop_assert!(hi >= n_add);
    }

    #[test]
    fn imprecision_decreasing_in_g(
        g in hz_to_rad(100.0)..hz_to_rad(1e5),
        k in 1.01..3.0f64,
        n_add in 0.0..10.0f64,
    ) {
        let dev = DeviceParams::reference();
        let c = &dev.cavity;
        let gm = dev.mech.gamma_m();
        let at = |g: f64| imprecision_from_chain(g, c.kappa(), c.kappa_ex(), gm, c.beta(), n_add).unwrap();
        let floor = imprecision_asymptote(c.kappa(), c.kappa_ex(), c.beta(), n_add).unwrap();
        prop_assert!(at(k * g) < at(g));
        prop_assert!(at(k * g) >= floor);
    }

    #[test]
    fn force_psd_linear(n1 in 0.0..1e3f64, n2 in 0.0..1e3f64, gt_hz in 1.0..1e4f64) {
        let mech = DeviceParams::reference().mech;
        let gt = hz_to_rad(gt_hz);
        let f = |n: f64| total_force_psd(&mech, gt, n).unwrap();
        let f0 = f(0.0);
        let lhs = f(n1 + n2) - f0;
        let rhs = (f(n1) - f0) + (f(n2) - f0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (f(n1 + n2)));
    }
}

#[test]
fn ideal_chain_meets_red_detuned_bound() {
    // κ_ex = κ, β = 1, n_add' = 1/2: n_imp → 1/4 as g → ∞
    let kappa = hz_to_rad(200e3);
    let n_imp = imprecision_asymptote(kappa, kappa, 1.0, 0.5).unwrap();
    assert_eq!(n_imp, 0.25);
    let h = heisenberg_product(n_imp, 0.5, true).unwrap();
    assert_eq!(h.value, std::f64::consts::SQRT_2);
}

// synth

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synth_positive(n_avg in 1u64..1000, seed in any::<u64>(), n_d in 1.0..1e5f64) {
        let p = reference_params(n_d, 40.0, 0.2, 2.1);
        let mut grid = GridSpec::around_sideband(&p);
        grid.points = 256;
        let t = generate_spectrum(&p, &NoiseConfig::new(n_avg, seed, grid).unwrap()).unwrap();
        prop_assert!(t.values().iter().all(|v| *v > 0.0));
    }
}

#[test]
fn synth_mean_unbiased() {
    let p = reference_params(4000.0, 40.0, 0.2, 2.1);
    let mut grid = GridSpec::resolving_peak(&p);
    grid.points = 64;
    let freqs = grid.build().unwrap();
    let clean = output_noise_spectrum(&freqs, &p).unwrap();
    let (n_avg, seeds) = (20u64, 1000u64);
    let mut sum = vec![0.0; freqs.len()];
    for seed in 0..seeds {
        let t = add_noise(&clean, n_avg, seed).unwrap();
        for (s, v) in sum.iter_mut().zip(t.values()) {
            *s += v;
        }
    }
    let mut worst: f64 = 0.0;
    for (s, c) in sum.iter().zip(clean.values()) {
        let se = c / ((n_avg * seeds) as f64).sqrt();
        worst = worst.max((s / seeds as f64 - c).abs() / se);
    }
    let mean_z = {
        let m: f64 = sum
            .iter()
            .zip(clean.values())
            .map(|(s, c)| s / seeds as f64 / c)
            .sum::<f64>()
            / freqs.len() as f64;
        (m - 1.0) / (1.0 / ((n_avg * seeds * freqs.len() as u64) as f64).sqrt())
    };
    assert!(mean_z.abs() < 3.0, "bin-averaged z = {mean_z}");
    assert!(worst < 4.5, "worst bin z = {worst}");
}

// estimation

fn lorentz_trace(
    center: f64,
    fwhm: f64,
    area: f64,
    floor: f64,
    points: usize,
    seed: u64,
) -> SpectrumTrace {
    let f: Vec<f64> = (0..points)
        .map(|i| center + (i as f64 / (points - 1) as f64 - 0.5) * 8.0 * fwhm)
        .collect();
    let v: Vec<f64> = f
        .iter()
        .map(|x| lorentzian(*x, center, fwhm, area, floor))
        .collect();
    let clean = SpectrumTrace::new(f, v, Unit::Quanta, TraceMeta::default()).unwrap();
    add_noise(&clean, 200, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_never_increases(
        fwhm in 10.0..1e3f64,
        height in 2.0..50.0f64,
        seed in any::<u64>(),
    ) {
        let area = height * fwhm * std::f64::consts::PI / 2.0;
        let t = lorentz_trace(1e7, fwhm, area, 1.0, 256, seed);
        let r = fit_lorentzian(&t, &LorentzianOptions::default()).unwrap();
        for run in &r.cost_history {
            for w in run.windows(2) {
                prop_assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn fits_reproducible(seed in any::<u64>()) {
        let t = lorentz_trace(1e7, 100.0, 1e3, 1.0, 128, seed);
        let a = fit_lorentzian(&t, &LorentzianOptions::default()).unwrap();
        let b = fit_lorentzian(&t, &LorentzianOptions::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn fit_matches_grid_search_oracle() {
    let (c0, w0, a0, floor) = (1e7, 100.0, 1500.0, 1.0);
    for seed in 0..4 {
        let t = lorentz_trace(c0, w0, a0, floor, 64, seed);
        let opts = LorentzianOptions {
            weighting: Weighting::Uniform,
            fixed_floor: Some(floor),
        };
        let r = fit_lorentzian(&t, &opts).unwrap();
        assert!(r.converged);

        let (f, y) = (t.freq_hz(), t.values());
        let cost = |c: f64, w: f64, a: f64| -> f64 {
            f.iter()
                .zip(y)
                .map(|(x, v)| (v - lorentzian(*x, c, w, a, floor)).powi(2))
                .sum()
        };
        // 50³ lattice over ±20% of truth in each coordinate
        let n = 50;
        let span = [0.2 * w0, 0.2 * w0, 0.2 * a0];
        let step: Vec<f64> = span.iter().map(|s| 2.0 * s / (n - 1) as f64).collect();
        let axis = |k: usize, i: usize, mid: f64| mid - span[k] + i as f64 * step[k];
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [axis(0, i, c0), axis(1, j, w0), axis(2, k, a0)];
                    let v = cost(p[0], p[1], p[2]);
                    if v < best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        // local refinement: coordinate search with shrinking steps
        let (mut bc, mut bp) = best;
        let mut h = step.clone();
        for _ in 0..200 {
            let mut moved = false;
            for k in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut q = bp;
                    q[k] += s * h[k];
                    let v = cost(q[0], q[1], q[2]);
                    if v < bc {
                        (bc, bp, moved) = (v, q, true);
                    }
                }
            }
            if !moved {
                h.iter_mut().for_each(|x| *x *= 0.5);
            }
        }
        let fit = [r.params["center"], r.params["fwhm"], r.params["area"]];
        for k in 0..3 {
            assert!(
                (fit[k] - bp[k]).abs() <= step[k],
                "seed {seed} coord {k}: fit {} oracle {}",
                fit[k],
                bp[k]
            );
        }
        assert!(cost(fit[0], fit[1], fit[2]) <= bc * (1.0 + 1e-9));
    }
}
