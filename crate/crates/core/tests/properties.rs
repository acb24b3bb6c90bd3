use std::sync::Arc;

use approx::assert_relative_eq;
use irk_spectral::problems::random_smooth_state;
use irk_spectral::spectral::{
    apply_a, apply_exp_ta, inverse_transform, solve_stage_resolvent, solve_stage_resolvent_uncached,
    transform, BoundaryCondition, SpectralGrid, StageSet, State, Symbol,
};
use irk_spectral::tableau::{
    gauss_legendre, quadrature_order, stability_function, ButcherTableau, StabilityRational,
    MAX_GAUSS_STAGES,
};
use irk_spectral::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BCS: [BoundaryCondition; 3] = [
    BoundaryCondition::Periodic,
    BoundaryCondition::Dirichlet,
    BoundaryCondition::Neumann,
];

fn grid(n: usize, bc: BoundaryCondition, symbol: Symbol) -> Arc<SpectralGrid> {
    SpectralGrid::new(n, bc, symbol).unwrap()
}

/// Random state with algebraic coefficient decay; `decay` near zero gives
/// coefficients of size one at every mode.
fn random_state(g: &Arc<SpectralGrid>, decay: f64, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = State::zeros(g);
    let n = g.n();
    for (i, c) in u.coeffs_mut().iter_mut().enumerate() {
        let k = g.wavenumbers()[i % n].abs() as f64;
        *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (1.0 + k).powf(-decay);
    }
    u
}

fn symbol() -> impl Strategy<Value = Symbol> {
    prop_oneof![Just(Symbol::Schrodinger), Just(Symbol::Wave)]
}

fn bc() -> impl Strategy<Value = BoundaryCondition> {
    (0..3usize).prop_map(|i| BCS[i])
}

/// `Σ_j a_ij A W_j`, stage by stage.
fn a_kron_a(t: &ButcherTableau, w: &StageSet) -> StageSet {
    let aw: Vec<State> = w.stages().iter().map(apply_a).collect();
    let out = (0..t.stages())
        .map(|i| {
            let mut acc = State::zeros(w.grid());
            for (j, x) in aw.iter().enumerate() {
                acc.axpy(Complex64::new(t.a(i, j), 0.0), x);
            }
            acc
        })
        .collect();
    StageSet::new(out).unwrap()
}

#[test]
fn generated_tableaus_are_consistent() {
    for s in 1..=MAX_GAUSS_STAGES {
        let t = gauss_legendre(s).unwrap();
        assert_eq!(quadrature_order(&t), 2 * s, "gl:{s}");
        assert_eq!(t.order(), 2 * s);
        assert_relative_eq!(t.b().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        for i in 0..s {
            let row: f64 = (0..s).map(|j| t.a(i, j)).sum();
            assert_relative_eq!(row, t.c()[i], epsilon = 1e-14);
        }
        // symmetric nodes
        for i in 0..s {
            assert_relative_eq!(t.c()[i] + t.c()[s - 1 - i], 1.0, epsilon = 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stability_function_is_conjugate_symmetric(s in 1..=5usize, re in -50.0..50.0f64, im in -50.0..50.0f64) {
        let t = gauss_legendre(s).unwrap();
        let z = Complex64::new(re, im);
        match (stability_function(&t, z), stability_function(&t, z.conj())) {
            (Ok(a), Ok(b)) => {
                let scale = a.norm().max(1.0);
                prop_assert!((a.conj() - b).norm() <= 1e-12 * scale, "{a} vs {b}");
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn gauss_legendre_is_unitary_on_the_imaginary_axis(s in 1..=MAX_GAUSS_STAGES, log_y in -3.0..6.0f64, sign in prop::bool::ANY) {
        let t = gauss_legendre(s).unwrap();
        let y = if sign { 10f64.powf(log_y) } else { -(10f64.powf(log_y)) };
        let v = stability_function(&t, Complex64::new(0.0, y)).unwrap();
        prop_assert!((v.norm() - 1.0).abs() <= 1e-12, "gl:{} |S({}i)| = {}", s, y, v.norm());
    }

    #[test]
    fn midpoint_matches_closed_form(re in -100.0..0.0f64, im in -100.0..100.0f64) {
        let z = Complex64::new(re, im);
        let exact = (1.0 + z / 2.0) / (1.0 - z / 2.0);
        let v = stability_function(&ButcherTableau::implicit_midpoint(), z).unwrap();
        prop_assert!((v - exact).norm() <= 1e-14, "{v} vs {exact}");
    }

    #[test]
    fn rational_and_resolvent_forms_agree(s in 1..=4usize, re in -20.0..0.0f64, im in -20.0..20.0f64) {
        let t = gauss_legendre(s).unwrap();
        let z = Complex64::new(re, im);
        let a = StabilityRational::new(&t).eval(z).unwrap();
        let b = stability_function(&t, z).unwrap();
        prop_assert!((a - b).norm() <= 1e-11, "{a} vs {b}");
        prop_assert!(a.norm() <= 1.0 + 1e-14);
    }

    #[test]
    fn resolvent_identity_on_random_stage_sets(
        s in 1..=3usize, symbol in symbol(), bc in bc(), h in 1e-3..1.0f64, seed in any::<u64>()
    ) {
        let g = grid(16, bc, symbol);
        let t = gauss_legendre(s).unwrap();
        let x = StageSet::new((0..s).map(|i| random_state(&g, 2.0, seed.wrapping_add(i as u64))).collect()).unwrap();
        let w = solve_stage_resolvent(&x, &t, h).unwrap();
        // (I − h aA)⁻¹ X = X + h aA (I − h aA)⁻¹ X
        let mut rhs = a_kron_a(&t, &w);
        for (r, xi) in rhs.stages_mut().iter_mut().zip(x.stages()) {
            r.scale(Complex64::new(h, 0.0));
            r.axpy(Complex64::new(1.0, 0.0), xi);
        }
        let scale = x.norm_y0().max(1.0);
        prop_assert!(w.difference_norm(&rhs) <= 1e-11 * scale);
    }

    #[test]
    fn cached_and_uncached_solves_are_identical(
        s in 1..=3usize, symbol in symbol(), bc in bc(), h in 1e-3..1.0f64, seed in any::<u64>()
    ) {
        let g = grid(16, bc, symbol);
        let t = gauss_legendre(s).unwrap();
        let x = StageSet::new((0..s).map(|i| random_state(&g, 1.0, seed ^ i as u64)).collect()).unwrap();
        let a = solve_stage_resolvent(&x, &t, h).unwrap();
        let b = solve_stage_resolvent_uncached(&x, &t, h).unwrap();
        for (u, v) in a.stages().iter().zip(b.stages()) {
            prop_assert!(u.coeffs().iter().zip(v.coeffs()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
        }
    }

    #[test]
    fn exponential_is_a_group(symbol in symbol(), bc in bc(), t1 in -2.0..2.0f64, t2 in -2.0..2.0f64, seed in any::<u64>()) {
        let g = grid(32, bc, symbol);
        let u = random_state(&g, 1.5, seed);
        let lhs = apply_exp_ta(&apply_exp_ta(&u, t2), t1);
        let rhs = apply_exp_ta(&u, t1 + t2);
        prop_assert!(lhs.difference(&rhs).norm_y0() <= 1e-12 * u.norm_y0().max(1.0));
    }

    #[test]
    fn a_is_bounded_between_scale_rungs(symbol in symbol(), bc in bc(), decay in 0.0..4.0f64, k in 0..=6usize, seed in any::<u64>()) {
        let g = grid(32, bc, symbol);
        let u = random_state(&g, decay, seed);
        let lhs = apply_a(&u).sobolev_norm(k).unwrap();
        let rhs = u.sobolev_norm(k + 1).unwrap();
        prop_assert!(lhs <= rhs, "{lhs} > {rhs}");
    }

    #[test]
    fn scale_norms_increase_along_the_ladder(symbol in symbol(), decay in 0.0..4.0f64, seed in any::<u64>()) {
        let g = grid(32, BoundaryCondition::Periodic, symbol);
        let u = random_state(&g, decay, seed);
        let norms: Vec<f64> = (0..=8).map(|k| u.sobolev_norm(k).unwrap()).collect();
        prop_assert!(norms.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(u.sobolev_norm(9).is_err());
    }

    #[test]
    fn transforms_roundtrip(symbol in symbol(), bc in bc(), band in 1..8i64, seed in any::<u64>()) {
        let g = grid(32, bc, symbol);
        let u = random_smooth_state(&g, band, seed);
        let back = transform(&g, &inverse_transform(&u)).unwrap();
        prop_assert!(back.difference(&u).norm_y0() <= 1e-13 * u.norm_y0().max(1.0));
    }
}
