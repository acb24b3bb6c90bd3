use std::sync::Arc;

use num_complex::Complex64;

use super::grid::SpectralGrid;
use crate::error::{Error, Result};

/// Modal coefficients of a solution on a [`SpectralGrid`], stored
/// component-major: slot `m` of component `r` lives at `r · n + m`.
#[derive(Debug, Clone)]
pub struct State {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.coeffs == other.coeffs
    }
}

impl State {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.components() * grid.n()],
        }
    }

    pub fn from_coeffs(grid: &Arc<SpectralGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = grid.components() * grid.n();
        if coeffs.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    /// State with a single nonzero coefficient.
    pub fn single_mode(
        grid: &Arc<SpectralGrid>,
        component: usize,
        k: i64,
        value: Complex64,
    ) -> Result<Self> {
        let mut s = Self::zeros(grid);
        s.set_mode(component, k, value)?;
        Ok(s)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn component(&self, r: usize) -> &[Complex64] {
        let n = self.grid.n();
        &self.coeffs[r * n..(r + 1) * n]
    }

    pub fn component_mut(&mut self, r: usize) -> &mut [Complex64] {
        let n = self.grid.n();
        &mut self.coeffs[r * n..(r + 1) * n]
    }

    fn slot(&self, component: usize, k: i64) -> Result<usize> {
        if component >= self.grid.components() {
            return Err(Error::invalid(format!("no component {component}")));
        }
        self.grid
            .slot_of(k)
            .ok_or_else(|| Error::invalid(format!("wavenumber {k} not on grid")))
    }

    pub fn mode(&self, component: usize, k: i64) -> Result<Complex64> {
        let slot = self.slot(component, k)?;
        Ok(self.component(component)[slot])
    }

    pub fn set_mode(&mut self, component: usize, k: i64, value: Complex64) -> Result<()> {
        let slot = self.slot(component, k)?;
        self.component_mut(component)[slot] = value;
        Ok(())
    }

    pub fn same_grid(&self, other: &State) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_grid(&self, grid: &SpectralGrid) -> Result<()> {
        if *self.grid != *grid {
            return Err(Error::invalid(format!(
                "state lives on {:?}, expected {:?}",
                self.grid, grid
            )));
        }
        Ok(())
    }

    /// `self += alpha · x`.
    pub fn axpy(&mut self, alpha: Complex64, x: &State) {
        debug_assert!(self.same_grid(x));
        for (y, &xv) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += alpha * xv;
        }
    }

    pub fn scale(&mut self, alpha: Complex64) {
        self.coeffs.iter_mut().for_each(|c| *c *= alpha);
    }

    pub fn difference(&self, other: &State) -> State {
        debug_assert!(self.same_grid(other));
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        State {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Squared base norm restricted to one copy of the base system.
    fn copy_norm_sq(&self, copy: usize) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let d = g.block_size();
        let base = copy * d;
        (0..n)
            .map(|m| {
                let w = g.mode_weight(m);
                let k2 = (g.wavenumbers()[m] * g.wavenumbers()[m]) as f64;
                match d {
                    1 => w * self.coeffs[base * n + m].norm_sqr(),
                    _ => {
                        let u = self.coeffs[base * n + m].norm_sqr();
                        let v = self.coeffs[(base + 1) * n + m].norm_sqr();
                        w * ((k2 + 1.0) * u + v)
                    }
                }
            })
            .sum()
    }

    /// Squared `Y₀` norm: discrete L² for Schrödinger, the modewise
    /// `H₁ × L₂` graph norm for the wave system, summed over copies.
    pub fn norm_y0_sq(&self) -> f64 {
        (0..self.grid.copies()).map(|q| self.copy_norm_sq(q)).sum()
    }

    pub fn norm_y0(&self) -> f64 {
        self.norm_y0_sq().sqrt()
    }

    /// Norm on the rung `Y_k` of the scale `D(A^k)`:
    /// `‖u‖²_{Y_k} = Σ_j C(k, j) ‖Aʲu‖²_{Y₀}`.
    pub fn sobolev_norm(&self, k: usize) -> Result<f64> {
        if k > self.grid.k_max() {
            return Err(Error::invalid(format!(
                "scale index {k} exceeds K_max = {}",
                self.grid.k_max()
            )));
        }
        let mut power = self.clone();
        let mut binom = 1.0;
        let mut total = 0.0;
        for j in 0..=k {
            if j > 0 {
                power = super::ops::apply_a(&power);
                binom *= (k + 1 - j) as f64 / j as f64;
            }
            total += binom * power.norm_y0_sq();
        }
        Ok(total.sqrt())
    }

    /// Splits a state on a stacked grid into its per-copy states.
    pub fn split_copies(&self) -> Vec<State> {
        let base = self.grid.base();
        let chunk = base.components() * base.n();
        self.coeffs
            .chunks(chunk)
            .map(|c| State {
                grid: Arc::clone(&base),
                coeffs: c.to_vec(),
            })
            .collect()
    }

    /// Stacks states of one base grid onto `grid` (which must have
    /// `parts.len()` copies of that base).
    pub fn stack(grid: &Arc<SpectralGrid>, parts: &[&State]) -> Result<State> {
        if grid.copies() != parts.len() {
            return Err(Error::invalid(format!(
                "grid has {} copies, got {} parts",
                grid.copies(),
                parts.len()
            )));
        }
        let base = grid.base();
        let mut coeffs = Vec::with_capacity(grid.components() * grid.n());
        for p in parts {
            p.check_grid(&base)?;
            coeffs.extend_from_slice(&p.coeffs);
        }
        Ok(State {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    /// Largest deviation from Hermitian symmetry `û_{−k} = conj(û_k)` over
    /// all components; zero for real fields on periodic grids.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst = 0.0_f64;
        for r in 0..g.components() {
            let c = self.component(r);
            for (m, &k) in g.wavenumbers().iter().enumerate() {
                let partner = match g.slot_of(-k) {
                    Some(p) => p,
                    // Nyquist mode is its own partner
                    None => m,
                };
                worst = worst.max((c[m] - c[partner].conj()).norm());
            }
        }
        worst
    }
}

/// The `s` stage vectors `W¹ … Wˢ` of one implicit Runge–Kutta step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSet {
    stages: Vec<State>,
}

impl StageSet {
    pub fn new(stages: Vec<State>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::invalid("stage set cannot be empty"))?;
        if stages.iter().any(|s| !s.same_grid(first)) {
            return Err(Error::invalid("all stages must share one grid"));
        }
        Ok(Self { stages })
    }

    /// `𝟙u`: `s` copies of one state.
    pub fn replicate(u: &State, s: usize) -> Self {
        Self {
            stages: vec![u.clone(); s],
        }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.stages[0].grid()
    }

    pub fn stages(&self) -> &[State] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [State] {
        &mut self.stages
    }

    pub fn into_stages(self) -> Vec<State> {
        self.stages
    }

    pub fn norm_y0(&self) -> f64 {
        self.stages.iter().map(State::norm_y0_sq).sum::<f64>().sqrt()
    }

    pub fn difference_norm(&self, other: &StageSet) -> f64 {
        self.stages
            .iter()
            .zip(&other.stages)
            .map(|(a, b)| a.difference(b).norm_y0_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.stages.iter().all(State::is_finite)
    }
}
