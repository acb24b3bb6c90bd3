use std::sync::Arc;

use num_complex::Complex64;

use super::grid::{SpectralGrid, Symbol};
use super::state::State;
use crate::error::{Error, Result};

/// Per-mode multiplication by the symbol of `A`.
pub fn apply_a(u: &State) -> State {
    let g = u.grid();
    let n = g.n();
    let mut out = State::zeros(g);
    for q in 0..g.copies() {
        match g.symbol() {
            Symbol::Schrodinger => {
                let (src, dst) = (u.component(q), out.component_mut(q));
                for (m, &k) in g.wavenumbers().iter().enumerate() {
                    dst[m] = Complex64::new(0.0, -((k * k) as f64)) * src[m];
                }
            }
            Symbol::Wave => {
                let (ur, vr) = (2 * q, 2 * q + 1);
                let c = out.coeffs_mut();
                for (m, &k) in g.wavenumbers().iter().enumerate() {
                    let uk = u.coeffs()[ur * n + m];
                    let vk = u.coeffs()[vr * n + m];
                    c[ur * n + m] = vk;
                    c[vr * n + m] = -((k * k) as f64) * uk;
                }
            }
        }
    }
    out
}

/// The exact propagator `e^{tA}`, mode by mode.
pub fn apply_exp_ta(u: &State, t: f64) -> State {
    let g = u.grid();
    let n = g.n();
    let mut out = u.clone();
    for q in 0..g.copies() {
        match g.symbol() {
            Symbol::Schrodinger => {
                let dst = out.component_mut(q);
                for (m, &k) in g.wavenumbers().iter().enumerate() {
                    dst[m] *= Complex64::from_polar(1.0, -((k * k) as f64) * t);
                }
            }
            Symbol::Wave => {
                let (ur, vr) = (2 * q, 2 * q + 1);
                let c = out.coeffs_mut();
                for (m, &k) in g.wavenumbers().iter().enumerate() {
                    let uk = u.coeffs()[ur * n + m];
                    let vk = u.coeffs()[vr * n + m];
                    if k == 0 {
                        // Jordan block: secular growth
                        c[ur * n + m] = uk + vk * t;
                        c[vr * n + m] = vk;
                    } else {
                        let kf = k.unsigned_abs() as f64;
                        let (sn, cs) = (kf * t).sin_cos();
                        c[ur * n + m] = uk * cs + vk * (sn / kf);
                        c[vr * n + m] = -uk * (kf * sn) + vk * cs;
                    }
                }
            }
        }
    }
    out
}

/// Nodal values (component-major, `components × n`) to modal coefficients.
///
/// Periodic grids use the DFT on `n` uniform points of `[0, 2π)`,
/// Dirichlet grids the type-I sine transform on interior points and Neumann
/// grids the type-I cosine transform including both endpoints.
pub fn transform(grid: &Arc<SpectralGrid>, values: &[Complex64]) -> Result<State> {
    let n = grid.n();
    if values.len() != grid.components() * n {
        return Err(Error::invalid(format!(
            "transform expects {} nodal values, got {}",
            grid.components() * n,
            values.len()
        )));
    }
    let mut coeffs = values.to_vec();
    for chunk in coeffs.chunks_mut(n) {
        grid.analyze(chunk);
    }
    State::from_coeffs(grid, coeffs)
}

/// Inverse of [`transform`]: nodal values, component-major.
pub fn inverse_transform(u: &State) -> Vec<Complex64> {
    let g = u.grid();
    let mut values = u.coeffs().to_vec();
    for chunk in values.chunks_mut(g.n()) {
        g.synthesize(chunk);
    }
    values
}

/// Nodal values of a single component.
pub(crate) fn component_to_nodes(u: &State, r: usize) -> Vec<Complex64> {
    let mut v = u.component(r).to_vec();
    u.grid().synthesize(&mut v);
    v
}

/// Modal coefficients of one scalar field from its nodal values.
pub(crate) fn nodes_to_component(grid: &SpectralGrid, mut values: Vec<Complex64>) -> Vec<Complex64> {
    grid.analyze(&mut values);
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BoundaryCondition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn apply_a_examples() {
        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Schrodinger).unwrap();
        let u = State::single_mode(&g, 0, 1, c(1.0, 0.0)).unwrap();
        assert_eq!(apply_a(&u).mode(0, 1).unwrap(), c(0.0, -1.0));

        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let u = State::single_mode(&g, 0, 2, c(1.0, 0.0)).unwrap();
        let au = apply_a(&u);
        assert_eq!(au.mode(0, 2).unwrap(), c(0.0, 0.0));
        assert_eq!(au.mode(1, 2).unwrap(), c(-4.0, 0.0));

        let mut u = State::zeros(&g);
        u.set_mode(0, 0, c(3.0, 0.0)).unwrap();
        u.set_mode(1, 0, c(5.0, 0.0)).unwrap();
        let au = apply_a(&u);
        assert_eq!(au.mode(0, 0).unwrap(), c(5.0, 0.0));
        assert_eq!(au.mode(1, 0).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn exponential_examples() {
        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Schrodinger).unwrap();
        let u = State::single_mode(&g, 0, 1, c(1.0, 0.0)).unwrap();
        let e = apply_exp_ta(&u, PI).mode(0, 1).unwrap();
        assert!((e - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(apply_exp_ta(&u, 0.0), u);

        let g = SpectralGrid::new(8, BoundaryCondition::Dirichlet, Symbol::Wave).unwrap();
        let u = State::single_mode(&g, 0, 1, c(1.0, 0.0)).unwrap();
        let e = apply_exp_ta(&u, PI / 2.0);
        assert!(e.mode(0, 1).unwrap().norm() < 1e-15);
        assert!((e.mode(1, 1).unwrap() - c(-1.0, 0.0)).norm() < 1e-15);

        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let mut u = State::zeros(&g);
        u.set_mode(0, 0, c(1.0, 0.0)).unwrap();
        u.set_mode(1, 0, c(2.0, 0.0)).unwrap();
        let e = apply_exp_ta(&u, 0.5);
        assert_eq!(e.mode(0, 0).unwrap(), c(2.0, 0.0));
        assert_eq!(e.mode(1, 0).unwrap(), c(2.0, 0.0));
    }

    #[test]
    fn exponential_solves_the_linear_flow() {
        // d/dt e^{tA}u = A e^{tA}u, checked by a central difference
        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs = (0..16).map(|_| c(rng.gen(), rng.gen())).collect();
        let u = State::from_coeffs(&g, coeffs).unwrap();
        let (t, eps) = (0.3, 1e-5);
        let mut fd = apply_exp_ta(&u, t + eps).difference(&apply_exp_ta(&u, t - eps));
        fd.scale(c(0.5 / eps, 0.0));
        let exact = apply_a(&apply_exp_ta(&u, t));
        assert!(fd.difference(&exact).norm_y0() < 1e-7 * exact.norm_y0());
    }

    fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn transform_roundtrip_all_bcs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bc in [
            BoundaryCondition::Periodic,
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Neumann,
        ] {
            for n in [2usize, 6, 16, 33, 64] {
                if bc == BoundaryCondition::Periodic && n % 2 == 1 {
                    continue;
                }
                let g = SpectralGrid::new(n, bc, Symbol::Wave).unwrap();
                let x = random_values(&mut rng, 2 * n);
                let back = inverse_transform(&transform(&g, &x).unwrap());
                let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12, "{bc:?} n = {n}: {err}");
            }
        }
    }

    #[test]
    fn transform_matches_direct_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for bc in [
            BoundaryCondition::Periodic,
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Neumann,
        ] {
            let g = SpectralGrid::new(10, bc, Symbol::Schrodinger).unwrap();
            let coeffs = random_values(&mut rng, 10);
            let u = State::from_coeffs(&g, coeffs.clone()).unwrap();
            let nodes = inverse_transform(&u);
            for (j, x) in g.nodes().into_iter().enumerate() {
                let direct: Complex64 = (0..10).map(|m| coeffs[m] * g.basis(m, x)).sum();
                assert!((direct - nodes[j]).norm() < 1e-12, "{bc:?}");
            }
        }
    }

    #[test]
    fn transform_of_elementary_functions() {
        let g = SpectralGrid::new(16, BoundaryCondition::Periodic, Symbol::Schrodinger).unwrap();
        let x: Vec<Complex64> = g.nodes().iter().map(|x| c(x.cos(), 0.0)).collect();
        let u = transform(&g, &x).unwrap();
        for (m, &k) in g.wavenumbers().iter().enumerate() {
            let expect = if k.abs() == 1 { 0.5 } else { 0.0 };
            assert!((u.coeffs()[m] - c(expect, 0.0)).norm() < 1e-15, "k = {k}");
        }

        let g = SpectralGrid::new(12, BoundaryCondition::Dirichlet, Symbol::Schrodinger).unwrap();
        let x: Vec<Complex64> = g.nodes().iter().map(|x| c(x.sin(), 0.0)).collect();
        let u = transform(&g, &x).unwrap();
        for (m, &k) in g.wavenumbers().iter().enumerate() {
            let expect = if k == 1 { 1.0 } else { 0.0 };
            assert!((u.coeffs()[m] - c(expect, 0.0)).norm() < 1e-14, "k = {k}");
        }

        let g = SpectralGrid::new(9, BoundaryCondition::Neumann, Symbol::Schrodinger).unwrap();
        let x: Vec<Complex64> = g.nodes().iter().map(|x| c(2.0 + (3.0 * x).cos(), 0.0)).collect();
        let u = transform(&g, &x).unwrap();
        for (m, &k) in g.wavenumbers().iter().enumerate() {
            let expect = match k {
                0 => 2.0,
                3 => 1.0,
                _ => 0.0,
            };
            assert!((u.coeffs()[m] - c(expect, 0.0)).norm() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn transform_size_mismatch() {
        let g = SpectralGrid::new(8, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        assert!(transform(&g, &[c(0.0, 0.0); 8]).is_err());
    }

    #[test]
    fn real_fields_are_hermitian() {
        let g = SpectralGrid::new(16, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Complex64> = (0..32).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let u = transform(&g, &x).unwrap();
        assert!(u.hermitian_defect() < 1e-12);
        assert!(apply_exp_ta(&u, 0.7).hermitian_defect() < 1e-12);
    }
}
