//! The stage resolvent `(I − h a ⊗ A)⁻¹` and the update map `S(hA)`.
//!
//! Both are block diagonal over modes. Each mode carries a dense LU
//! factorization of its `(s·d) × (s·d)` block, `d` being the symbol's block
//! size; stacked copies on extended grids reuse the base factorization.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, RwLock};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use super::grid::SpectralGrid;
use super::state::{StageSet, State};
use crate::error::{Error, Result};
use crate::tableau::ButcherTableau;

type Block = [[Complex64; 2]; 2];

/// Per-mode factorizations of `I − h a ⊗ A_k` for one `(tableau, h, grid)`.
pub struct StageResolvent {
    s: usize,
    d: usize,
    n: usize,
    h: f64,
    grid_fingerprint: u64,
    lus: Vec<LU<Complex64, Dyn, Dyn>>,
    stability: Vec<Block>,
}

impl std::fmt::Debug for StageResolvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageResolvent")
            .field("s", &self.s)
            .field("d", &self.d)
            .field("n", &self.n)
            .field("h", &self.h)
            .finish()
    }
}

impl StageResolvent {
    pub fn build(grid: &SpectralGrid, tableau: &ButcherTableau, h: f64) -> Result<Self> {
        if !h.is_finite() || h < 0.0 {
            return Err(Error::invalid(format!("step size must be finite and >= 0, got {h}")));
        }
        let s = tableau.stages();
        let d = grid.block_size();
        let dim = s * d;
        let one = Complex64::new(1.0, 0.0);
        let mut lus = Vec::with_capacity(grid.n());
        let mut stability = Vec::with_capacity(grid.n());
        for &k in grid.wavenumbers() {
            let ak = grid.symbol().block(k);
            let m = DMatrix::from_fn(dim, dim, |row, col| {
                let (i, r) = (row / d, row % d);
                let (j, c) = (col / d, col % d);
                let id = if row == col { one } else { Complex64::new(0.0, 0.0) };
                id - ak[r][c] * (h * tableau.a(i, j))
            });
            let lu = m.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularStageBlock { mode: k, h });
            }
            // S(hA_k) = I + h (bᵀ ⊗ I) M⁻¹ (𝟙 ⊗ A_k)
            let mut sk: Block = [[Complex64::new(0.0, 0.0); 2]; 2];
            for c in 0..d {
                let mut col = DVector::from_fn(dim, |row, _| ak[row % d][c]);
                if !lu.solve_mut(&mut col) || col.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularStageBlock { mode: k, h });
                }
                for r in 0..d {
                    let sum: Complex64 = (0..s).map(|i| col[i * d + r] * tableau.b()[i]).sum();
                    sk[r][c] = if r == c { one } else { Complex64::new(0.0, 0.0) } + sum * h;
                }
            }
            lus.push(lu);
            stability.push(sk);
        }
        Ok(Self {
            s,
            d,
            n: grid.n(),
            h,
            grid_fingerprint: grid.fingerprint(),
            lus,
            stability,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    /// `S(hA_k)` at coefficient slot `slot`, row-major `d × d`.
    pub fn stability_block(&self, slot: usize) -> Block {
        self.stability[slot]
    }

    fn check(&self, grid: &SpectralGrid) -> Result<()> {
        if grid.fingerprint() != self.grid_fingerprint {
            return Err(Error::invalid("state grid does not match the resolvent's grid"));
        }
        Ok(())
    }

    /// Applies `M_k⁻¹` mode by mode; `emit` receives `(slot, copy, solution)`.
    fn solve_modes(&self, rhs: &StageSet, mut emit: impl FnMut(usize, usize, &DVector<Complex64>)) {
        let (s, d, n) = (self.s, self.d, self.n);
        let copies = rhs.grid().copies();
        let mut buf = DVector::from_element(s * d, Complex64::new(0.0, 0.0));
        for q in 0..copies {
            for m in 0..n {
                for (i, st) in rhs.stages().iter().enumerate() {
                    let c = st.coeffs();
                    for r in 0..d {
                        buf[i * d + r] = c[(q * d + r) * n + m];
                    }
                }
                self.lus[m].solve_mut(&mut buf);
                emit(m, q, &buf);
            }
        }
    }

    /// Solves `(I − h a ⊗ A) W = rhs`.
    pub fn solve(&self, rhs: &StageSet) -> Result<StageSet> {
        self.check(rhs.grid())?;
        if rhs.len() != self.s {
            return Err(Error::invalid(format!(
                "expected {} stages, got {}",
                self.s,
                rhs.len()
            )));
        }
        let (d, n) = (self.d, self.n);
        let mut out: Vec<State> = vec![State::zeros(rhs.grid()); self.s];
        self.solve_modes(rhs, |m, q, x| {
            for (i, st) in out.iter_mut().enumerate() {
                let c = st.coeffs_mut();
                for r in 0..d {
                    c[(q * d + r) * n + m] = x[i * d + r];
                }
            }
        });
        StageSet::new(out)
    }

    /// `Σᵢ wᵢ [(I − h a ⊗ A)⁻¹ rhs]ᵢ`, e.g. `bᵀ(I − h a A)⁻¹ B(W)`.
    pub fn solve_combined(&self, rhs: &StageSet, weights: &[f64]) -> Result<State> {
        self.check(rhs.grid())?;
        if rhs.len() != self.s || weights.len() != self.s {
            return Err(Error::invalid("stage count mismatch"));
        }
        let (d, n) = (self.d, self.n);
        let mut out = State::zeros(rhs.grid());
        let c = out.coeffs_mut();
        self.solve_modes(rhs, |m, q, x| {
            for r in 0..d {
                c[(q * d + r) * n + m] = (0..weights.len()).map(|i| x[i * d + r] * weights[i]).sum();
            }
        });
        Ok(out)
    }

    /// `S(hA) u`.
    pub fn apply_stability(&self, u: &State) -> Result<State> {
        self.check(u.grid())?;
        let (d, n) = (self.d, self.n);
        let mut out = State::zeros(u.grid());
        let src = u.coeffs();
        let dst = out.coeffs_mut();
        for q in 0..u.grid().copies() {
            for m in 0..n {
                let sk = &self.stability[m];
                for r in 0..d {
                    dst[(q * d + r) * n + m] =
                        (0..d).map(|c| sk[r][c] * src[(q * d + c) * n + m]).sum();
                }
            }
        }
        Ok(out)
    }
}

type CacheKey = (u64, u64, u64);

/// Factorization cache keyed by `(tableau fingerprint, h bits, grid
/// fingerprint)`. Reads are shared; inserts take the write lock.
#[derive(Default)]
pub struct ResolventCache {
    map: RwLock<HashMap<CacheKey, Arc<StageResolvent>>>,
}

static GLOBAL_CACHE: LazyLock<ResolventCache> = LazyLock::new(ResolventCache::default);

impl ResolventCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache used by the free functions of this module and
    /// the stepper.
    pub fn global() -> &'static ResolventCache {
        &GLOBAL_CACHE
    }

    pub fn get(
        &self,
        grid: &SpectralGrid,
        tableau: &ButcherTableau,
        h: f64,
    ) -> Result<Arc<StageResolvent>> {
        let key = (tableau.fingerprint(), h.to_bits(), grid.fingerprint());
        if let Some(r) = self.map.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(r));
        }
        let built = Arc::new(StageResolvent::build(grid, tableau, h)?);
        let mut map = self.map.write().expect("cache lock poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.write().expect("cache lock poisoned").clear();
    }
}

/// Solves `(I − h a ⊗ A) W = rhs` using the global factorization cache.
pub fn solve_stage_resolvent(rhs: &StageSet, t: &ButcherTableau, h: f64) -> Result<StageSet> {
    ResolventCache::global().get(rhs.grid(), t, h)?.solve(rhs)
}

/// Same as [`solve_stage_resolvent`] but factorizes afresh.
pub fn solve_stage_resolvent_uncached(
    rhs: &StageSet,
    t: &ButcherTableau,
    h: f64,
) -> Result<StageSet> {
    StageResolvent::build(rhs.grid(), t, h)?.solve(rhs)
}

/// The update map `S(hA)` applied to `u`.
pub fn apply_s_ha(u: &State, t: &ButcherTableau, h: f64) -> Result<State> {
    ResolventCache::global().get(u.grid(), t, h)?.apply_stability(u)
}
