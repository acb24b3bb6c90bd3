//! Experiments: reference solutions, convergence studies with order fits,
//! conserved-quantity tracking, linear stability growth, step-size
//! smoothness probes and the Dirichlet compatibility comparison.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problems::{lookup, ProblemKind, ProblemSpec, Semilinear, TangentSystem};
use crate::spectral::{
    apply_exp_ta, component_to_nodes, BoundaryCondition, ResolventCache, SpectralGrid, State,
};
use crate::stepper::{integrate, step, tangent_step, SolverConfig, StepStats};
use crate::tableau::{gauss_legendre, ButcherTableau, StabilityRational};

/// Tuning of a convergence study and its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyOptions {
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub contraction_warn: f64,
    pub debug_checks: bool,
    /// Reference uses `s + reference_stage_gap` Gauss–Legendre stages.
    pub reference_stage_gap: usize,
    /// Reference step is the smallest study step divided by this.
    pub reference_refinement: usize,
    /// Refining the reference may change it by at most this fraction of
    /// the smallest study error.
    pub validation_factor: f64,
    /// Levels whose error is below this multiple of `fp_tol` are excluded
    /// from the order fit.
    pub contamination_factor: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            fp_max_iters: 200,
            contraction_warn: 0.9,
            debug_checks: false,
            reference_stage_gap: 2,
            reference_refinement: 16,
            validation_factor: 1e-3,
            contamination_factor: 100.0,
        }
    }
}

impl StudyOptions {
    pub fn with_fp_tol(fp_tol: f64) -> Self {
        Self {
            fp_tol,
            ..Self::default()
        }
    }

    fn solver(&self, h: f64) -> SolverConfig {
        SolverConfig {
            h,
            fp_tol: self.fp_tol,
            fp_max_iters: self.fp_max_iters,
            contraction_warn: self.contraction_warn,
            debug_checks: self.debug_checks,
        }
    }
}

/// Number of steps of size `h` covering `[0, t_final]`, if integral.
pub fn step_count(t_final: f64, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    let ratio = t_final / h;
    let m = ratio.round();
    if (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid(format!("T = {t_final} is not a multiple of h = {h}")));
    }
    Ok(m as usize)
}

fn run_to<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u0: &State,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<(State, Vec<StepStats>)> {
    if steps == 0 {
        return Ok((u0.clone(), Vec::new()));
    }
    integrate(p, t, u0, cfg, steps, |_, _, _| Ok(())).map_err(|e| e.at_h(cfg.h))
}

/// Parameters of a fine-step reference integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSpec {
    pub stages: usize,
    pub h: f64,
    pub fp_tol: f64,
    /// Maximum allowed change when the reference step is halved.
    pub bound: Option<f64>,
}

impl ReferenceSpec {
    /// The reference belonging to a study with tableau `t` and smallest
    /// step `h_min`.
    pub fn for_study(t: &ButcherTableau, h_min: f64, opts: &StudyOptions) -> Self {
        Self {
            stages: t.stages() + opts.reference_stage_gap,
            h: h_min / opts.reference_refinement as f64,
            fp_tol: opts.fp_tol.min(1e-14),
            bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceInfo {
    /// `gl:<s>` or `exact` for the closed-form linear propagator.
    pub method: String,
    pub h: Option<f64>,
    pub steps: usize,
    /// `‖ref(h) − ref(h/2)‖_{Y₀}`.
    pub refinement_change: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub state: State,
    pub info: ReferenceInfo,
}

fn reference_pair<P: Semilinear + ?Sized>(
    p: &P,
    u0: &State,
    t_final: f64,
    spec: &ReferenceSpec,
) -> Result<Reference> {
    let tableau = gauss_legendre(spec.stages)?;
    let coarse_steps = step_count(t_final, spec.h)?;
    let coarse_cfg = SolverConfig::with_step(spec.h).fp_tol(spec.fp_tol);
    let fine_cfg = SolverConfig::with_step(spec.h / 2.0).fp_tol(spec.fp_tol);
    let (coarse, fine) = rayon::join(
        || run_to(p, &tableau, u0, &coarse_cfg, coarse_steps),
        || run_to(p, &tableau, u0, &fine_cfg, 2 * coarse_steps),
    );
    let (coarse, fine) = (coarse?.0, fine?.0);
    let change = fine.difference(&coarse).norm_y0();
    Ok(Reference {
        state: fine,
        info: ReferenceInfo {
            method: tableau.label().to_string(),
            h: Some(spec.h / 2.0),
            steps: 2 * coarse_steps,
            refinement_change: change,
            bound: spec.bound,
        },
    })
}

fn validate(reference: Reference) -> Result<Reference> {
    match reference.info.bound {
        Some(bound) if reference.info.refinement_change.is_nan() || reference.info.refinement_change > bound => Err(Error::UnreliableReference {
            discrepancy: reference.info.refinement_change,
            bound,
        }),
        _ => Ok(reference),
    }
}

/// Stand-in for the exact flow `Φ^T(u0)`: Gauss–Legendre with `spec.stages`
/// stages at `spec.h`, recomputed at `spec.h / 2`; the finer result is
/// returned once the two agree within `spec.bound`.
pub fn reference_solution<P: Semilinear + ?Sized>(
    p: &P,
    u0: &State,
    t_final: f64,
    spec: &ReferenceSpec,
) -> Result<Reference> {
    if t_final.is_nan() || t_final < 0.0 {
        return Err(Error::invalid(format!("final time must be non-negative, got {t_final}")));
    }
    validate(reference_pair(p, u0, t_final, spec)?)
}

/// Summary of one step size of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub h: f64,
    pub steps: usize,
    pub error_y0: f64,
    pub mean_iters: f64,
    pub max_iters: usize,
    pub max_residual: f64,
    /// Mean over steps of the per-step contraction estimate.
    pub contraction_est: f64,
    pub contraction_warnings: usize,
    pub contaminated: bool,
}

impl LevelResult {
    fn new(h: f64, error: f64, stats: &[StepStats], opts: &StudyOptions) -> Self {
        let m = stats.len().max(1) as f64;
        Self {
            h,
            steps: stats.len(),
            error_y0: error,
            mean_iters: stats.iter().map(|s| s.iterations as f64).sum::<f64>() / m,
            max_iters: stats.iter().map(|s| s.iterations).max().unwrap_or(0),
            max_residual: stats.iter().map(|s| s.final_residual).fold(0.0, f64::max),
            contraction_est: stats.iter().map(|s| s.contraction_estimate).sum::<f64>() / m,
            contraction_warnings: stats.iter().filter(|s| s.exceeds(opts.contraction_warn)).count(),
            contaminated: error.is_nan() || error < opts.contamination_factor * opts.fp_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub tableau: String,
    pub order: usize,
    pub t_final: f64,
    pub fp_tol: f64,
    pub levels: Vec<LevelResult>,
    /// Least-squares slope of `log error` against `log h` over the
    /// uncontaminated levels.
    pub fitted_order: f64,
    pub reference: ReferenceInfo,
}

impl ConvergenceReport {
    pub fn h_list(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.h).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.error_y0).collect()
    }

    /// Errors decrease strictly along the (decreasing) step sizes.
    pub fn errors_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].error_y0 < w[0].error_y0)
    }

    pub fn any_contaminated(&self) -> bool {
        self.levels.iter().any(|l| l.contaminated)
    }

    /// Whether the fitted order lies within `p ± tol`.
    pub fn order_within(&self, tol: f64) -> bool {
        (self.fitted_order - self.order as f64).abs() <= tol
    }

    /// Ratios of contraction estimates between consecutive levels.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| w[1].contraction_est / w[0].contraction_est)
            .collect()
    }

    pub fn max_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.max_iters).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,steps,error_Y0,mean_iters,max_residual,contraction_est")?;
        for l in &self.levels {
            writeln!(
                out,
                "{:?},{},{:?},{:?},{:?},{:?}",
                l.h, l.steps, l.error_y0, l.mean_iters, l.max_residual, l.contraction_est
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_order(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn check_h_list(h_list: &[f64], t_final: f64) -> Result<Vec<usize>> {
    if h_list.len() < 2 {
        return Err(Error::invalid("a convergence study needs at least two step sizes"));
    }
    if h_list.windows(2).any(|w| w[1].is_nan() || w[1] >= w[0]) {
        return Err(Error::invalid("h_list must be strictly decreasing"));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
    }
    h_list.iter().map(|&h| step_count(t_final, h)).collect()
}

/// Final-time `Y₀` errors of `(Ψ^h)^{T/h}(u0)` for each `h`, against the
/// exact propagator for linear systems and a validated fine reference
/// otherwise. Levels run in parallel; the report keeps `h_list` order.
pub fn convergence_study<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u0: &State,
    t_final: f64,
    h_list: &[f64],
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    let steps = check_h_list(h_list, t_final)?;
    let h_min = *h_list.last().expect("non-empty");
    let run_levels = || {
        h_list
            .par_iter()
            .zip(&steps)
            .map(|(&h, &m)| run_to(p, t, u0, &opts.solver(h), m))
            .collect::<Result<Vec<_>>>()
    };
    let (finals, reference) = if p.is_linear() {
        let exact = Reference {
            state: apply_exp_ta(u0, t_final),
            info: ReferenceInfo {
                method: "exact".into(),
                h: None,
                steps: 0,
                refinement_change: 0.0,
                bound: None,
            },
        };
        (run_levels()?, exact)
    } else {
        let spec = ReferenceSpec::for_study(t, h_min, opts);
        let (finals, reference) = rayon::join(run_levels, || reference_pair(p, u0, t_final, &spec));
        (finals?, reference?)
    };

    let mut levels: Vec<LevelResult> = finals
        .iter()
        .zip(h_list)
        .map(|((u, stats), &h)| LevelResult::new(h, u.difference(&reference.state).norm_y0(), stats, opts))
        .collect();
    if let Some(bad) = levels.iter().find(|l| !l.error_y0.is_finite()) {
        return Err(Error::NumericalBlowup("study error").at_h(bad.h));
    }

    let mut reference = reference;
    if reference.info.method != "exact" {
        // levels at the fixed-point floor say nothing about the reference
        let fitted = levels.iter().filter(|l| !l.contaminated);
        let min_error = match fitted.clone().count() {
            0 => levels.iter().map(|l| l.error_y0).fold(f64::INFINITY, f64::min),
            _ => fitted.map(|l| l.error_y0).fold(f64::INFINITY, f64::min),
        };
        reference.info.bound = Some(opts.validation_factor * min_error);
        reference = validate(reference)?;
    }

    let clean: Vec<&LevelResult> = levels.iter().filter(|l| !l.contaminated).collect();
    let fitted_order = fit_order(
        &clean.iter().map(|l| l.h).collect::<Vec<_>>(),
        &clean.iter().map(|l| l.error_y0).collect::<Vec<_>>(),
    );
    levels.shrink_to_fit();
    Ok(ConvergenceReport {
        problem: p.describe(),
        tableau: t.label().to_string(),
        order: t.order(),
        t_final,
        fp_tol: opts.fp_tol,
        levels,
        fitted_order,
        reference: reference.info,
    })
}

/// `h_max, h_max/2, …` with `levels` entries.
pub fn dyadic_steps(h_max: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|i| h_max / f64::powi(2.0, i as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservedQuantities {
    /// `‖u‖²_{L²}` of the first field.
    pub mass: f64,
    pub energy: f64,
}

/// Trapezoid weights matching the grid's collocation nodes.
fn node_weights(grid: &SpectralGrid) -> Vec<f64> {
    let n = grid.n();
    match grid.bc() {
        BoundaryCondition::Periodic => vec![2.0 * PI / n as f64; n],
        BoundaryCondition::Dirichlet => vec![PI / (n + 1) as f64; n],
        BoundaryCondition::Neumann => {
            let h = PI / (n - 1) as f64;
            let mut w = vec![h; n];
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
            w
        }
    }
}

fn spectral_quadratic(p: &ProblemSpec, u: &State) -> (f64, f64) {
    let g = p.grid();
    let n = g.n();
    let mut mass = 0.0;
    let mut grad = 0.0;
    let mut velocity = 0.0;
    for (m, &k) in g.wavenumbers().iter().enumerate() {
        let w = g.mode_weight(m);
        let a = u.coeffs()[m].norm_sqr();
        mass += w * a;
        grad += w * (k * k) as f64 * a;
        if p.kind() == ProblemKind::Wave {
            velocity += w * u.coeffs()[n + m].norm_sqr();
        }
    }
    let quadratic = match p.kind() {
        ProblemKind::Nls => grad,
        ProblemKind::Wave => 0.5 * (velocity + grad),
    };
    (mass, quadratic)
}

/// Mass and energy: quadratic parts by Parseval, the potential by the
/// trapezoid rule on the collocation nodes. NLS energy is
/// `Σ k²|u_k|² + ∫V(u, ū)`, wave energy `½Σ(|v_k|² + k²|u_k|²) + ∫F(u)`.
pub fn conserved_quantities(p: &ProblemSpec, u: &State) -> Result<ConservedQuantities> {
    u.check_grid(p.grid())?;
    let (mass, quadratic) = spectral_quadratic(p, u);
    let nl = p.nonlinearity();
    let potential = if nl.is_zero() {
        0.0
    } else {
        let nodes = component_to_nodes(u, 0);
        node_weights(p.grid())
            .iter()
            .zip(&nodes)
            .map(|(w, &v)| {
                w * match p.kind() {
                    ProblemKind::Nls => nl.potential(v),
                    ProblemKind::Wave => nl.antiderivative(v.re),
                }
            })
            .sum()
    };
    Ok(ConservedQuantities {
        mass,
        energy: quadratic + potential,
    })
}

/// Mass and quadratic energy from a composite trapezoid rule on `points`
/// intervals, with fields evaluated by direct summation of the series.
pub fn trapezoid_quadratic(p: &ProblemSpec, u: &State, points: usize) -> Result<(f64, f64)> {
    u.check_grid(p.grid())?;
    if points < 2 {
        return Err(Error::invalid("trapezoid rule needs at least two intervals"));
    }
    let g = p.grid();
    let n = g.n();
    let dx = g.length() / points as f64;
    let eval = |r: usize, x: f64, deriv: bool| -> Complex64 {
        (0..n)
            .map(|m| {
                let phi = if deriv { g.basis_dx(m, x) } else { g.basis(m, x) };
                u.coeffs()[r * n + m] * phi
            })
            .sum()
    };
    let mut mass = 0.0;
    let mut quadratic = 0.0;
    for i in 0..=points {
        let x = i as f64 * dx;
        let w = if i == 0 || i == points { 0.5 * dx } else { dx };
        mass += w * eval(0, x, false).norm_sqr();
        let grad = eval(0, x, true).norm_sqr();
        quadratic += w * match p.kind() {
            ProblemKind::Nls => grad,
            ProblemKind::Wave => 0.5 * (grad + eval(1, x, false).norm_sqr()),
        };
    }
    Ok((mass, quadratic))
}

/// Cross-checks the Parseval quadratic parts against physical-space
/// trapezoid quadrature, relative tolerance `1e−10`.
pub fn check_quadratures(p: &ProblemSpec, u: &State) -> Result<()> {
    let (mass, quadratic) = spectral_quadratic(p, u);
    let (tm, tq) = trapezoid_quadratic(p, u, 4 * p.grid().n())?;
    let scale = mass.abs().max(quadratic.abs()).max(1.0);
    let discrepancy = (mass - tm).abs().max((quadratic - tq).abs());
    let bound = 1e-10 * scale;
    if discrepancy > bound {
        return Err(Error::ConsistencyCheck {
            what: "spectral vs trapezoid quadrature",
            discrepancy,
            bound,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub problem: String,
    pub tableau: String,
    pub h: f64,
    pub steps: usize,
    /// Values at steps `0..=steps`.
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub relative_mass_drift: f64,
    /// Largest `|E_j − E_0|` over the first tenth of the steps.
    pub early_energy_deviation: f64,
    pub max_energy_deviation: f64,
    pub final_energy_deviation: f64,
    pub max_iters: usize,
}

impl ConservationReport {
    /// Final energy deviation within twice the early maximum.
    pub fn energy_without_drift(&self) -> bool {
        self.final_energy_deviation <= 2.0 * self.early_energy_deviation
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,t,mass,energy")?;
        for (j, (m, e)) in self.mass.iter().zip(&self.energy).enumerate() {
            writeln!(out, "{j},{:?},{m:?},{e:?}", j as f64 * self.h)?;
        }
        Ok(())
    }
}

/// Tracks mass and energy along `steps` steps of size `cfg.h`.
pub fn conservation_run(
    p: &ProblemSpec,
    t: &ButcherTableau,
    u0: &State,
    cfg: &SolverConfig,
    steps: usize,
) -> Result<ConservationReport> {
    let q0 = conserved_quantities(p, u0)?;
    let mut mass = vec![q0.mass];
    let mut energy = vec![q0.energy];
    let mut failure = None;
    let (_, stats) = integrate(p, t, u0, cfg, steps, |_, u, _| {
        if cfg.debug_checks {
            if let Err(e) = check_quadratures(p, u) {
                let msg = e.to_string();
                failure = Some(e);
                return Err(msg);
            }
        }
        let q = conserved_quantities(p, u).map_err(|e| e.to_string())?;
        mass.push(q.mass);
        energy.push(q.energy);
        Ok(())
    })
    .map_err(|e| failure.take().unwrap_or(e))?;

    let dev: Vec<f64> = energy.iter().map(|e| (e - q0.energy).abs()).collect();
    let early = (steps / 10).max(1);
    Ok(ConservationReport {
        problem: p.name().to_string(),
        tableau: t.label().to_string(),
        h: cfg.h,
        steps,
        relative_mass_drift: mass.iter().map(|m| (m - q0.mass).abs()).fold(0.0, f64::max)
            / q0.mass.abs().max(f64::MIN_POSITIVE),
        early_energy_deviation: dev[..=early].iter().copied().fold(0.0, f64::max),
        max_energy_deviation: dev.iter().copied().fold(0.0, f64::max),
        final_energy_deviation: *dev.last().expect("non-empty"),
        max_iters: stats.iter().map(|s| s.iterations).max().unwrap_or(0),
        mass,
        energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityGrowth {
    /// `max_k ρ(S(hA_k))^{n_steps}`.
    pub amplification: f64,
    /// `max_k ‖S(hA_k)^{n_steps}‖` in the modewise `Y₀` norm; this sees the
    /// secular growth of Jordan blocks that the spectral radius misses.
    pub norm_growth: f64,
    pub worst_mode: i64,
}

type Block = [[Complex64; 2]; 2];

fn block_mul(x: &Block, y: &Block) -> Block {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    out
}

fn block_pow(b: &Block, mut e: usize) -> Block {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = [[one, zero], [zero, one]];
    let mut base = *b;
    while e > 0 {
        if e & 1 == 1 {
            acc = block_mul(&acc, &base);
        }
        base = block_mul(&base, &base);
        e >>= 1;
    }
    acc
}

fn spectral_norm(b: &Block) -> f64 {
    // largest eigenvalue of BᴴB
    let a = b[0][0].norm_sqr() + b[1][0].norm_sqr();
    let c = b[0][1].norm_sqr() + b[1][1].norm_sqr();
    let off = b[0][0].conj() * b[0][1] + b[1][0].conj() * b[1][1];
    let lambda = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + off.norm_sqr()).sqrt();
    lambda.sqrt()
}

/// Growth of the linear step `S(hA)` over `n_steps` steps, mode by mode.
/// The spectral radius of `S(hA_k)` is `max |S(hμ)|` over the eigenvalues
/// `μ` of `A_k`, evaluated through the rational form of `S`.
pub fn stability_growth(
    t: &ButcherTableau,
    grid: &Arc<SpectralGrid>,
    h: f64,
    n_steps: usize,
) -> Result<StabilityGrowth> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    let mut out = StabilityGrowth {
        amplification: 1.0,
        norm_growth: 1.0,
        worst_mode: 0,
    };
    if n_steps == 0 {
        return Ok(out);
    }
    let rational = StabilityRational::new(t);
    let resolvent = ResolventCache::global().get(grid, t, h)?;
    let scalar = grid.block_size() == 1;
    out.amplification = 0.0;
    out.norm_growth = 0.0;
    for (slot, &k) in grid.wavenumbers().iter().enumerate() {
        let k2 = (k * k) as f64;
        let eigenvalues = if scalar {
            vec![Complex64::new(0.0, -k2)]
        } else {
            vec![Complex64::new(0.0, k2.sqrt()), Complex64::new(0.0, -k2.sqrt())]
        };
        let mut rho = 0.0_f64;
        for mu in eigenvalues {
            rho = rho.max(rational.modulus(mu * h)?);
        }
        let rho = rho.powi(n_steps as i32);
        let b = resolvent.stability_block(slot);
        let norm = if scalar {
            b[0][0].norm().powi(n_steps as i32)
        } else {
            // conjugate by diag(√(k²+1), 1) to measure in the Y₀ weighting
            let d = (k2 + 1.0).sqrt();
            let p = block_pow(&b, n_steps);
            spectral_norm(&[[p[0][0], p[0][1] * d], [p[1][0] / d, p[1][1]]])
        };
        if rho > out.amplification {
            out.amplification = rho;
            out.worst_mode = k;
        }
        out.norm_growth = out.norm_growth.max(norm);
    }
    Ok(out)
}

/// Stencil spacing of [`smoothness_probe`] relative to the base step.
pub const PROBE_SPACING: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessProbe {
    pub q: usize,
    /// Base step sizes, decreasing.
    pub h: Vec<f64>,
    /// `‖δ^{−q} Σ_j (−1)^j C(q, j) Ψ^{h + (q/2 − j)δ}(u0)‖_{Y₀}` with
    /// `δ = PROBE_SPACING · h`, per base step.
    pub norms: Vec<f64>,
}

impl SmoothnessProbe {
    /// Last norm over first norm: near one when `∂_h^q Ψ^h(u0)` stays
    /// bounded as `h → 0`, large when it does not.
    pub fn growth(&self) -> f64 {
        self.norms.last().copied().unwrap_or(f64::NAN) / self.norms[0]
    }

    /// Ratio of the last two norms; settles at one when the differences
    /// converge and stays above one while they keep growing.
    pub fn tail_ratio(&self) -> f64 {
        match self.norms.as_slice() {
            [.., a, b] => b / a,
            _ => f64::NAN,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,delta,fd_norm")?;
        for (h, v) in self.h.iter().zip(&self.norms) {
            writeln!(out, "{h:?},{:?},{v:?}", PROBE_SPACING * h)?;
        }
        Ok(())
    }
}

/// `q`-th central differences of `h ↦ Ψ^h(u0)` at each base step, an
/// empirical view of `∂_h^q Ψ^h` in `Y₀` as `h` shrinks.
pub fn smoothness_probe<P: Semilinear + ?Sized>(
    p: &P,
    t: &ButcherTableau,
    u0: &State,
    h_list: &[f64],
    q: usize,
    fp_tol: f64,
) -> Result<SmoothnessProbe> {
    if q > 4 {
        return Err(Error::invalid(format!("difference order {q} exceeds 4")));
    }
    if h_list.is_empty() {
        return Err(Error::invalid("smoothness probe needs at least one step size"));
    }
    if let Some(&h) = h_list.iter().find(|&&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    let norms = h_list
        .par_iter()
        .map(|&h| {
            let delta = PROBE_SPACING * h;
            let mut acc = State::zeros(p.grid());
            let mut binom = 1.0;
            for j in 0..=q {
                if j > 0 {
                    binom *= (q + 1 - j) as f64 / j as f64;
                }
                let hj = h + (0.5 * q as f64 - j as f64) * delta;
                let cfg = SolverConfig::with_step(hj).fp_tol(fp_tol);
                let (psi, _) = step(p, t, u0, &cfg).map_err(|e| e.at_h(hj))?;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc.axpy(Complex64::new(sign * binom, 0.0), &psi);
            }
            Ok(acc.norm_y0() / delta.powi(q as i32))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmoothnessProbe {
        q,
        h: h_list.to_vec(),
        norms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletComparison {
    pub compatible: ConvergenceReport,
    pub incompatible: ConvergenceReport,
}

pub const DIRICHLET_COMPATIBLE: &str = "wave-dirichlet-compatible";
pub const DIRICHLET_INCOMPATIBLE: &str = "wave-dirichlet-incompatible";

/// Convergence studies of the catalogue's Dirichlet wave problems with
/// `f(0) = 0` and `f(0) ≠ 0`, both from the compatible problem's initial
/// data.
pub fn dirichlet_compatibility_study(
    t: &ButcherTableau,
    t_final: f64,
    h_list: &[f64],
    n: Option<usize>,
    opts: &StudyOptions,
) -> Result<DirichletComparison> {
    let mut compatible = lookup(DIRICHLET_COMPATIBLE)?;
    let mut incompatible = lookup(DIRICHLET_INCOMPATIBLE)?;
    if let Some(n) = n {
        compatible = compatible.with_modes(n)?;
        incompatible = incompatible.with_modes(n)?;
    }
    let incompatible = incompatible.with_initial(compatible.initial_terms().to_vec());
    let u0 = compatible.initial_state()?;
    let (a, b) = rayon::join(
        || convergence_study(&compatible, t, &u0, t_final, h_list, opts),
        || convergence_study(&incompatible, t, &u0, t_final, h_list, opts),
    );
    Ok(DirichletComparison {
        compatible: a?,
        incompatible: b?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentCheck {
    pub eps: f64,
    pub relative_error: f64,
    pub tangent_norm: f64,
}

/// Compares the tangent step against `(Ψ(u + εv) − Ψ(u − εv)) / 2ε`.
pub fn tangent_fd_check(
    p: &ProblemSpec,
    t: &ButcherTableau,
    u: &State,
    v: &State,
    cfg: &SolverConfig,
    eps: f64,
) -> Result<TangentCheck> {
    let (_, tangent, _) = tangent_step(p, t, u, v, cfg)?;
    let shifted = |sign: f64| -> Result<State> {
        let mut w = u.clone();
        w.axpy(Complex64::new(sign * eps, 0.0), v);
        Ok(step(p, t, &w, cfg)?.0)
    };
    let (plus, minus) = rayon::join(|| shifted(1.0), || shifted(-1.0));
    let mut fd = plus?.difference(&minus?);
    fd.scale(Complex64::new(0.5 / eps, 0.0));
    let tangent_norm = tangent.norm_y0();
    Ok(TangentCheck {
        eps,
        relative_error: fd.difference(&tangent).norm_y0() / tangent_norm.max(f64::MIN_POSITIVE),
        tangent_norm,
    })
}

/// Convergence study of the variational system started at `(u0, v0)`.
pub fn tangent_convergence_study(
    p: &ProblemSpec,
    t: &ButcherTableau,
    u0: &State,
    v0: &State,
    t_final: f64,
    h_list: &[f64],
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    let ext = TangentSystem::new(p);
    let w0 = ext.combine(u0, v0)?;
    convergence_study(&ext, t, &w0, t_final, h_list, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{rough_state, Nonlinearity, Profile, Term};
    use crate::spectral::Symbol;
    use approx::assert_relative_eq;

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.5, 0.02).unwrap(), 25);
        assert_eq!(step_count(0.5, 0.02 / 64.0).unwrap(), 1600);
        assert!(step_count(0.5, 0.03).is_err());
        assert!(step_count(0.5, 0.0).is_err());
    }

    #[test]
    fn order_fit_recovers_power_laws() {
        let h = dyadic_steps(0.1, 5);
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x.powi(4)).collect();
        assert_relative_eq!(fit_order(&h, &e), 4.0, epsilon = 1e-12);
        assert!(fit_order(&h[..1], &e[..1]).is_nan());
    }

    #[test]
    fn zero_time_reference_is_initial_state() {
        let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
        let u = p.initial_state().unwrap();
        let spec = ReferenceSpec {
            stages: 3,
            h: 0.01,
            fp_tol: 1e-14,
            bound: Some(0.0),
        };
        let r = reference_solution(&p, &u, 0.0, &spec).unwrap();
        assert_eq!(r.state, u);
    }

    #[test]
    fn linear_reference_matches_exact_flow() {
        let p = lookup("nls-linear-periodic").unwrap();
        let u = p.initial_state().unwrap();
        let spec = ReferenceSpec {
            stages: 3,
            h: 0.005,
            fp_tol: 1e-14,
            bound: None,
        };
        let r = reference_solution(&p, &u, 0.5, &spec).unwrap();
        assert!(r.state.difference(&apply_exp_ta(&u, 0.5)).norm_y0() <= 1e-11);
    }

    #[test]
    fn unreliable_reference_detected() {
        let p = lookup("nls-cubic-periodic").unwrap();
        let u = p.initial_state().unwrap();
        let spec = ReferenceSpec {
            stages: 1,
            h: 0.05,
            fp_tol: 1e-13,
            bound: Some(1e-12),
        };
        assert!(matches!(
            reference_solution(&p, &u, 0.5, &spec),
            Err(Error::UnreliableReference { .. })
        ));
    }

    #[test]
    fn study_rejects_bad_inputs() {
        let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
        let u = p.initial_state().unwrap();
        let t = gauss_legendre(1).unwrap();
        let o = StudyOptions::default();
        assert!(convergence_study(&p, &t, &u, 0.5, &[0.01, 0.02], &o).is_err());
        assert!(convergence_study(&p, &t, &u, 0.5, &[0.01], &o).is_err());
        assert!(convergence_study(&p, &t, &u, 0.5, &[0.03, 0.015], &o).is_err());
    }

    #[test]
    fn linear_study_uses_exact_propagator() {
        let p = lookup("nls-linear-periodic").unwrap();
        let u = p.initial_state().unwrap();
        let t = gauss_legendre(1).unwrap();
        let r = convergence_study(&p, &t, &u, 0.5, &dyadic_steps(0.02, 4), &StudyOptions::default())
            .unwrap();
        assert_eq!(r.reference.method, "exact");
        assert!((r.fitted_order - 2.0).abs() < 0.1, "{}", r.fitted_order);
        assert!(r.errors_monotone());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn conserved_quantities_of_simple_states() {
        let p = lookup("nls-cubic-periodic").unwrap();
        let zero = State::zeros(p.grid());
        assert_eq!(conserved_quantities(&p, &zero).unwrap(), ConservedQuantities { mass: 0.0, energy: 0.0 });

        let a = 0.7;
        let u = State::single_mode(p.grid(), 0, 1, Complex64::new(a, 0.0)).unwrap();
        let q = conserved_quantities(&p, &u).unwrap();
        assert_relative_eq!(q.mass, 2.0 * PI * a * a, epsilon = 1e-14);
        // |u| = a everywhere: Σk²|u_k|² + ∫|u|⁴/2
        assert_relative_eq!(q.energy, 2.0 * PI * a * a + PI * a.powi(4), epsilon = 1e-13);
    }

    #[test]
    fn wave_energy_two_ways() {
        let grid = SpectralGrid::new(32, BoundaryCondition::Dirichlet, Symbol::Wave).unwrap();
        let p = ProblemSpec::new("w", ProblemKind::Wave, grid, Nonlinearity::Zero)
            .unwrap()
            .with_initial(vec![Term::new(0, 1.0, Profile::Sin, 1)]);
        let u = p.initial_state().unwrap();
        let q = conserved_quantities(&p, &u).unwrap();
        // ½∫cos² over [0, π]
        assert_relative_eq!(q.energy, PI / 4.0, epsilon = 1e-14);
        let (_, trap) = trapezoid_quadratic(&p, &u, 128).unwrap();
        assert!((trap - q.energy).abs() <= 1e-10);
        check_quadratures(&p, &u).unwrap();
    }

    #[test]
    fn quadratures_agree_for_every_catalogue_problem() {
        for p in crate::problems::standard_problems() {
            let p = p.with_modes(32).unwrap();
            let u = crate::problems::random_smooth_state(p.grid(), 8, 3);
            check_quadratures(&p, &u).unwrap_or_else(|e| panic!("{}: {e}", p.name()));
        }
    }

    #[test]
    fn schrodinger_growth_is_unity() {
        let g = SpectralGrid::new(64, BoundaryCondition::Periodic, Symbol::Schrodinger).unwrap();
        for s in 1..=3 {
            let t = gauss_legendre(s).unwrap();
            let g1 = stability_growth(&t, &g, 0.1, 50).unwrap();
            assert!((g1.amplification - 1.0).abs() <= 1e-13);
            assert_eq!(stability_growth(&t, &g, 0.1, 0).unwrap().amplification, 1.0);
        }
    }

    #[test]
    fn jordan_block_grows_linearly() {
        let g = SpectralGrid::new(16, BoundaryCondition::Periodic, Symbol::Wave).unwrap();
        let t = gauss_legendre(1).unwrap();
        let h = 0.1;
        let g10 = stability_growth(&t, &g, h, 10).unwrap();
        let g100 = stability_growth(&t, &g, h, 100).unwrap();
        let g1000 = stability_growth(&t, &g, h, 1000).unwrap();
        assert!((g1000.amplification - 1.0).abs() < 1e-10);
        // S(hA_0) = [[1, h], [0, 1]]: ‖Sⁿ‖ ≈ nh for large n
        assert_relative_eq!(g1000.norm_growth, spectral_norm(&[[1.0.into(), 100.0.into()], [0.0.into(), 1.0.into()]]), epsilon = 1e-9);
        assert!(g100.norm_growth / g10.norm_growth < 10.5);
        assert!(g1000.norm_growth / g100.norm_growth < 10.5);
        assert!(g1000.norm_growth > 50.0);
    }

    #[test]
    fn smoothness_probe_basics() {
        let p = lookup("nls-linear-periodic").unwrap().with_modes(16).unwrap();
        let u = p.initial_state().unwrap();
        let t = gauss_legendre(1).unwrap();
        let zero = smoothness_probe(&p, &t, &u, &[0.1], 0, 1e-13).unwrap();
        let direct = step(&p, &t, &u, &SolverConfig::with_step(0.1).fp_tol(1e-13)).unwrap().0;
        assert_eq!(zero.norms[0], direct.norm_y0());
        assert!(smoothness_probe(&p, &t, &u, &[0.1], 5, 1e-13).is_err());
        assert!(smoothness_probe(&p, &t, &u, &[], 2, 1e-13).is_err());
        assert!(smoothness_probe(&p, &t, &u, &[-0.1], 2, 1e-13).is_err());
    }

    #[test]
    fn smoothness_probe_separates_rough_data() {
        let p = lookup("nls-linear-periodic").unwrap();
        let t = gauss_legendre(1).unwrap();
        let hs: Vec<f64> = (0..7).map(|i| 0.1 / 2f64.powi(i)).collect();
        let smooth = smoothness_probe(&p, &t, &p.initial_state().unwrap(), &hs, 2, 1e-14).unwrap();
        let mut rough = rough_state(p.grid(), 1.1, 3);
        rough.scale(0.3.into());
        let rough = smoothness_probe(&p, &t, &rough, &hs, 2, 1e-14).unwrap();
        assert!((smooth.tail_ratio() - 1.0).abs() < 0.01, "{smooth:?}");
        assert!(smooth.growth() < 3.0);
        assert!(rough.tail_ratio() > 1.5, "{rough:?}");
        assert!(rough.growth() > 100.0);
    }

    #[test]
    fn conservation_run_debug_quadrature() {
        let p = lookup("nls-cubic-periodic").unwrap().with_modes(16).unwrap();
        let u = p.initial_state().unwrap();
        let t = gauss_legendre(1).unwrap();
        let cfg = SolverConfig::with_step(0.01).fp_tol(1e-13).debug_checks(true);
        let r = conservation_run(&p, &t, &u, &cfg, 20).unwrap();
        assert_eq!(r.mass.len(), 21);
        assert!(r.relative_mass_drift < 1e-11);
    }
}
