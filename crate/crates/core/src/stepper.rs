//! One implicit Runge–Kutta step `Ψ^h` for `∂ₜU = AU + B(U)`.
//!
//! The stage equations are solved by plain fixed-point iteration of
//!
//! ```text
//! W ← (I − h a A)⁻¹ (𝟙U + h a B(W)),     W⁰ = (I − h a A)⁻¹ 𝟙U,
//! ```
//!
//! and the update is taken in resolvent form
//! `Ψ^h(U) = S(hA)U + h bᵀ (I − h a A)⁻¹ B(W)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ProblemSpec, Semilinear, TangentSystem};
use crate::spectral::{apply_a, ResolventCache, StageSet, State};
use crate::tableau::ButcherTableau;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub h: f64,
    /// Absolute tolerance on `‖W_new − W_old‖_{Y₀}`.
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    /// Contraction estimates above this are counted as warnings.
    pub contraction_warn: f64,
    /// Cross-check the resolvent-form update against `U + h bᵀ(AW + B(W))`.
    pub debug_checks: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            fp_tol: 1e-12,
            fp_max_iters: 200,
            contraction_warn: 0.9,
            debug_checks: false,
        }
    }
}

impl SolverConfig {
    pub fn with_step(h: f64) -> Self {
        Self {
            h,
            ..Self::default()
        }
    }

    pub fn fp_tol(mut self, tol: f64) -> Self {
        self.fp_tol = tol;
        self
    }

    pub fn debug_checks(mut self, on: bool) -> Self {
        self.debug_checks = on;
        self
    }

    fn validate(&self, allow_zero_step: bool) -> Result<()> {
        let h_ok = self.h.is_finite() && (self.h > 0.0 || (allow_zero_step && self.h == 0.0));
        if !h_ok {
            return Err(Error::invalid(format!("step size must be positive, got {}", self.h)));
        }
        if self.fp_tol.is_nan() || self.fp_tol <= 0.0 {
            return Err(Error::invalid(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iters == 0 {
            return Err(Error::invalid("fp_max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Fixed-point statistics of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub iterations: usize,
    pub final_residual: f64,
    /// Larger of the first two ratios of successive residuals above the
    /// round-off floor (the iteration may alternate between two rates);
    /// zero after a single iteration.
    pub contraction_estimate: f64,
}

impl StepStats {
    fn from_history(history: &[f64], scale: f64) -> Self {
        let floor = 1e3 * f64::EPSILON * scale.max(1.0);
        let usable: Vec<f64> = history.iter().copied().take_while(|&r| r > floor).collect();
        let ratios: Vec<f64> = usable.windows(2).map(|w| w[1] / w[0]).collect();
        let contraction_estimate = if !ratios.is_empty() {
            ratios.iter().take(2).copied().fold(0.0, f64::max)
        } else if history.len() >= 2 && history[0] > 0.0 {
            history[1] / history[0]
        } else {
            0.0
        };
        Self {
            iterations: history.len(),
            final_residual: history.last().copied().unwrap_or(0.0),
            contraction_estimate,
        }
    }

    pub fn exceeds(&self, threshold: f64) -> bool {
        self.contraction_estimate > threshold
    }
}

fn nonlinear_stages<P: Semilinear + ?Sized>(p: &P, w: &StageSet) -> Result<StageSet> {
    StageSet::new(w.stages().iter().map(|s| p.nonlinear(s)).collect::<Result<Vec<_>>>()?)
}

/// `𝟙u + h a B(W)`.
fn stage_rhs(t: &ButcherTableau, u: &State, bw: &StageSet, h: f64) -> Result<StageSet> {
    let s = t.stages();
    let rhs = (0..s)
        .map(|i| {
            let mut r = u.clone();
            for (j, b) in bw.stages().iter().enumerate() {
                let aij = t.a(i, j);
                if aij != 0.0 {
                    r.axpy(Complex64::new(h * aij, 0.0), b);
                }
            }
            r
        })
        .collect();
    StageSet::new(rhs)
}

/// Solves the stage equations by fixed-point iteration of the resolvent
/// map. `h = 0` is accepted as a degenerate probe.
pub fn fixed_point_stages<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u: &State,
    cfg: &SolverConfig,
) -> Result<(StageSet, StepStats)> {
    cfg.validate(true)?;
    u.check_grid(p.grid())?;
    let resolvent = ResolventCache::global().get(p.grid(), t, cfg.h)?;
    let mut w = resolvent.solve(&StageSet::replicate(u, t.stages()))?;
    if !w.is_finite() {
        return Err(Error::NumericalBlowup("initial stage guess"));
    }
    let mut history = Vec::new();
    for _ in 0..cfg.fp_max_iters {
        let bw = nonlinear_stages(p, &w)?;
        let next = resolvent.solve(&stage_rhs(t, u, &bw, cfg.h)?)?;
        if !next.is_finite() {
            return Err(Error::NumericalBlowup("stage iteration"));
        }
        let residual = next.difference_norm(&w);
        w = next;
        history.push(residual);
        if residual <= cfg.fp_tol {
            let stats = StepStats::from_history(&history, w.norm_y0());
            return Ok((w, stats));
        }
    }
    Err(Error::ConvergenceFailure {
        stats: StepStats::from_history(&history, w.norm_y0()),
    })
}

/// The step map `Ψ^h(u)` with its fixed-point statistics.
pub fn step<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u: &State,
    cfg: &SolverConfig,
) -> Result<(State, StepStats)> {
    cfg.validate(false)?;
    let (w, stats) = fixed_point_stages(p, t, u, cfg)?;
    let resolvent = ResolventCache::global().get(p.grid(), t, cfg.h)?;
    let bw = nonlinear_stages(p, &w)?;
    let mut next = resolvent.apply_stability(u)?;
    next.axpy(Complex64::new(cfg.h, 0.0), &resolvent.solve_combined(&bw, t.b())?);
    if !next.is_finite() {
        return Err(Error::NumericalBlowup("step update"));
    }
    if cfg.debug_checks {
        let direct = direct_update(t, u, &w, &bw, cfg.h);
        let discrepancy = direct.difference(&next).norm_y0();
        let bound = 10.0 * cfg.fp_tol;
        if discrepancy > bound {
            return Err(Error::ConsistencyCheck {
                what: "resolvent vs direct update",
                discrepancy,
                bound,
            });
        }
    }
    Ok((next, stats))
}

/// `u + h bᵀ(AW + B(W))`.
pub(crate) fn direct_update(
    t: &ButcherTableau,
    u: &State,
    w: &StageSet,
    bw: &StageSet,
    h: f64,
) -> State {
    let mut out = u.clone();
    for ((wi, bi), &b) in w.stages().iter().zip(bw.stages()).zip(t.b()) {
        out.axpy(Complex64::new(h * b, 0.0), &apply_a(wi));
        out.axpy(Complex64::new(h * b, 0.0), bi);
    }
    out
}

/// Residual `‖W − (I − h a A)⁻¹(𝟙u + h a B(W))‖_{Y₀}` of a stage set.
pub fn stage_residual<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u: &State,
    w: &StageSet,
    h: f64,
) -> Result<f64> {
    let resolvent = ResolventCache::global().get(p.grid(), t, h)?;
    let bw = nonlinear_stages(p, w)?;
    let image = resolvent.solve(&stage_rhs(t, u, &bw, h)?)?;
    Ok(image.difference_norm(w))
}

/// Applies [`step`] `steps` times. The observer sees `(index, state, stats)`
/// after every step, index starting at 1; an `Err` from it aborts.
pub fn integrate<P, F>(
    p: &P,
    t: &ButcherTableau,
    u0: &State,
    cfg: &SolverConfig,
    steps: usize,
    mut observer: F,
) -> Result<(State, Vec<StepStats>)>
where
    P: Semilinear + ?Sized,
    F: FnMut(usize, &State, &StepStats) -> std::result::Result<(), String>,
{
    if steps == 0 {
        return Err(Error::invalid("integrate needs at least one step"));
    }
    let mut u = u0.clone();
    let mut all = Vec::with_capacity(steps);
    for i in 1..=steps {
        let (next, stats) = step(p, t, &u, cfg)?;
        observer(i, &next, &stats).map_err(|reason| Error::ObserverAbort { step: i, reason })?;
        u = next;
        all.push(stats);
    }
    Ok((u, all))
}

/// [`integrate`] without an observer.
pub fn integrate_quiet<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u0: &State,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<(State, Vec<StepStats>)> {
    integrate(p, t, u0, cfg, steps, |_, _, _| Ok(()))
}

/// Advances `(U, V)` one step of the variational extension
/// `∂ₜ(U, V) = diag(A, A)(U, V) + (B(U), DB(U)V)` with the same tableau.
pub fn tangent_step(
    p: &ProblemSpec,
    t: &ButcherTableau,
    u: &State,
    v: &State,
    cfg: &SolverConfig,
) -> Result<(State, State, StepStats)> {
    let ext = TangentSystem::new(p);
    let w = ext.combine(u, v)?;
    let (next, stats) = step(&ext, t, &w, cfg)?;
    let (u1, v1) = ext.split(&next);
    let u1 = State::from_coeffs(p.grid(), u1.into_coeffs())?;
    let v1 = State::from_coeffs(p.grid(), v1.into_coeffs())?;
    Ok((u1, v1, stats))
}
