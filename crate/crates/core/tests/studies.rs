use irk_spectral::harness::{
    conservation_run, convergence_study, dyadic_steps, fit_order, reference_solution, smoothness_probe,
    stability_growth, step_count, ReferenceSpec, StudyOptions,
};
use irk_spectral::problems::{lookup, rough_state};
use irk_spectral::spectral::{BoundaryCondition, SpectralGrid, Symbol};
use irk_spectral::stepper::SolverConfig;
use irk_spectral::tableau::{gauss_legendre, MAX_GAUSS_STAGES};
use irk_spectral::Error;
use proptest::prelude::*;

fn opts() -> StudyOptions {
    StudyOptions::with_fp_tol(1e-13)
}

#[test]
fn order_is_reproduced_on_small_grids() {
    for name in ["nls-cubic-periodic", "wave-cubic-periodic"] {
        let p = lookup(name).unwrap().with_modes(32).unwrap();
        let u0 = p.initial_state().unwrap();
        for s in 1..=2 {
            let t = gauss_legendre(s).unwrap();
            let r = convergence_study(&p, &t, &u0, 0.5, &dyadic_steps(0.02, 5), &opts()).unwrap();
            assert!(r.order_within(0.15), "{name} gl:{s}: {:.3} {:?}", r.fitted_order, r.errors());
            assert!(r.errors_monotone(), "{name} gl:{s}: {:?}", r.errors());
            assert!(!r.any_contaminated());
            assert_eq!(r.reference.method, format!("gl:{}", s + 2));
            let bound = r.reference.bound.unwrap();
            assert!(r.reference.refinement_change <= bound);
        }
    }
}

#[test]
fn studies_are_deterministic() {
    let p = lookup("wave-cubic-periodic").unwrap().with_modes(16).unwrap();
    let u0 = p.initial_state().unwrap();
    let t = gauss_legendre(2).unwrap();
    let h = dyadic_steps(0.05, 4);
    let a = convergence_study(&p, &t, &u0, 0.2, &h, &opts()).unwrap();
    let b = convergence_study(&p, &t, &u0, 0.2, &h, &opts()).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("h,steps,error_Y0,mean_iters,max_residual,contraction_est\n"));
}

#[test]
fn linear_studies_use_the_exact_flow() {
    let p = lookup("nls-linear-periodic").unwrap().with_modes(32).unwrap();
    let u0 = p.initial_state().unwrap();
    let t = gauss_legendre(1).unwrap();
    let r = convergence_study(&p, &t, &u0, 0.5, &dyadic_steps(0.01, 4), &opts()).unwrap();
    assert_eq!(r.reference.method, "exact");
    assert!(r.reference.bound.is_none());
    assert!(r.order_within(0.1), "{}", r.fitted_order);
}

#[test]
fn contaminated_levels_leave_the_fit() {
    // gl:3 errors fall below 100 fp_tol at the finest levels
    let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
    let u0 = p.initial_state().unwrap();
    let t = gauss_legendre(3).unwrap();
    let o = StudyOptions::with_fp_tol(1e-11);
    let r = convergence_study(&p, &t, &u0, 0.5, &dyadic_steps(0.05, 5), &o).unwrap();
    assert!(r.any_contaminated(), "{:?}", r.errors());
    for l in &r.levels {
        assert_eq!(l.contaminated, l.error_y0 < 100.0 * o.fp_tol);
    }
    let clean: Vec<_> = r.levels.iter().filter(|l| !l.contaminated).collect();
    assert!(clean.len() >= 2);
    let fit = fit_order(
        &clean.iter().map(|l| l.h).collect::<Vec<_>>(),
        &clean.iter().map(|l| l.error_y0).collect::<Vec<_>>(),
    );
    assert_eq!(r.fitted_order, fit);
    // the reference is held to the errors that enter the fit
    let min_clean = clean.iter().map(|l| l.error_y0).fold(f64::INFINITY, f64::min);
    assert_eq!(r.reference.bound, Some(o.validation_factor * min_clean));
}

#[test]
fn unreliable_references_are_rejected() {
    let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
    let u0 = p.initial_state().unwrap();
    let spec = ReferenceSpec {
        stages: 1,
        h: 0.05,
        fp_tol: 1e-13,
        bound: Some(1e-12),
    };
    let err = reference_solution(&p, &u0, 0.5, &spec).unwrap_err();
    assert!(matches!(err, Error::UnreliableReference { .. }), "{err}");
    let ok = reference_solution(&p, &u0, 0.5, &ReferenceSpec { bound: None, ..spec }).unwrap();
    assert_eq!(ok.info.steps, 20);
    assert!(ok.info.refinement_change > 1e-12);
}

#[test]
fn study_inputs_are_validated() {
    let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
    let u0 = p.initial_state().unwrap();
    let t = gauss_legendre(1).unwrap();
    assert!(convergence_study(&p, &t, &u0, 0.5, &[0.1], &opts()).is_err());
    assert!(convergence_study(&p, &t, &u0, 0.5, &[0.05, 0.1], &opts()).is_err());
    assert!(convergence_study(&p, &t, &u0, 0.5, &[0.3, 0.15], &opts()).is_err());
    assert_eq!(step_count(0.5, 0.02).unwrap(), 25);
    assert!(step_count(0.5, 0.3).is_err());
}

#[test]
fn wave_energy_oscillates_without_drift() {
    let p = lookup("wave-cubic-periodic").unwrap().with_modes(32).unwrap();
    let u0 = p.initial_state().unwrap();
    let t = gauss_legendre(1).unwrap();
    let r = conservation_run(&p, &t, &u0, &SolverConfig::with_step(0.01).fp_tol(1e-13), 500).unwrap();
    assert_eq!(r.energy.len(), 501);
    assert!(r.energy_without_drift(), "{r:?}");
    assert!(r.max_energy_deviation < 1e-2 * r.energy[0].abs());
}

#[test]
fn smoothness_separates_smooth_and_rough_data() {
    let p = lookup("nls-cubic-periodic").unwrap();
    let t = gauss_legendre(1).unwrap();
    let h = dyadic_steps(0.1, 6);
    let smooth = smoothness_probe(&p, &t, &p.initial_state().unwrap(), &h, 2, 1e-14).unwrap();
    let mut rough = rough_state(p.grid(), 1.1, 3);
    rough.scale(0.3.into());
    let rough = smoothness_probe(&p, &t, &rough, &h, 2, 1e-14).unwrap();
    assert!(smooth.tail_ratio() < 1.05, "{smooth:?}");
    assert!(rough.tail_ratio() > 1.5, "{rough:?}");
    assert!(rough.growth() > 50.0 * smooth.growth());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_power_laws(order in 0.5..6.0f64, c in 1e-3..1e3f64, h0 in 1e-3..0.5f64, n in 2..8usize) {
        let h = dyadic_steps(h0, n);
        let e: Vec<f64> = h.iter().map(|x| c * x.powf(order)).collect();
        prop_assert!((fit_order(&h, &e) - order).abs() < 1e-9);
    }

    #[test]
    fn dyadic_steps_halve(h0 in 1e-4..1.0f64, n in 1..12usize) {
        let h = dyadic_steps(h0, n);
        prop_assert_eq!(h.len(), n);
        prop_assert_eq!(h[0], h0);
        prop_assert!(h.windows(2).all(|w| w[1] == w[0] / 2.0));
    }

    #[test]
    fn schrodinger_steps_never_amplify(s in 1..=MAX_GAUSS_STAGES, log_h in -3.0..0.0f64, n in prop_oneof![Just(32usize), Just(256)]) {
        let grid = SpectralGrid::new(n, BoundaryCondition::Periodic, Symbol::Schrodinger).unwrap();
        let t = gauss_legendre(s).unwrap();
        let h = 10f64.powf(log_h);
        let one = stability_growth(&t, &grid, h, 1).unwrap();
        prop_assert!(one.amplification <= 1.0 + 1e-14, "{one:?}");
        let many = stability_growth(&t, &grid, h, 100).unwrap();
        prop_assert!((many.amplification - 1.0).abs() <= 1e-13, "{many:?}");
        // block powers go through the LU factors and carry their rounding
        prop_assert!((many.norm_growth - 1.0).abs() <= 1e-11, "{many:?}");
    }

    #[test]
    fn wave_growth_is_at_most_secular(s in 1..=3usize, log_h in -3.0..0.0f64, steps in 1..200usize) {
        let grid = SpectralGrid::new(32, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let t = gauss_legendre(s).unwrap();
        let h = 10f64.powf(log_h);
        let g = stability_growth(&t, &grid, h, steps).unwrap();
        prop_assert!((g.amplification - 1.0).abs() <= 1e-12, "{g:?}");
        // the k = 0 Jordan block grows like n h, nothing grows faster
        prop_assert!(g.norm_growth <= 1.0 + steps as f64 * h + 1e-9, "{g:?}");
    }
}
