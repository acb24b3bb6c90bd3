//! Semilinear right-hand sides `B(U)` for the wave and nonlinear
//! Schrödinger equations, evaluated pseudospectrally (transform to nodes,
//! apply the scalar nonlinearity pointwise, transform back) with optional
//! 2/3-rule dealiasing.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    component_to_nodes, nodes_to_component, transform, BoundaryCondition, SpectralGrid, State,
    Symbol,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// `∂ₜₜu = ∂ₓₓu − f(u)` as a first-order system in `(u, v = ∂ₜu)`.
    Wave,
    /// `i∂ₜu = −∂ₓₓu + ∂_ū V(u, ū)`.
    Nls,
}

impl ProblemKind {
    pub fn symbol(self) -> Symbol {
        match self {
            ProblemKind::Wave => Symbol::Wave,
            ProblemKind::Nls => Symbol::Schrodinger,
        }
    }
}

/// Scalar nonlinearity, interpreted per problem kind.
///
/// | name                  | wave `f(u)` | NLS `V(u, ū)`               |
/// |-----------------------|-------------|------------------------------|
/// | `zero`                | `0`         | `0`                          |
/// | `cubic`               | `u³`        | `|u|⁴/2`                     |
/// | `cubic_plus_const:c`  | `u³ + c`    | `|u|⁴/2 + c(u + ū)`          |
/// | `quintic`             | `u⁵`        | `|u|⁶/3`                     |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    Zero,
    Cubic,
    CubicPlusConst(f64),
    Quintic,
}

impl Nonlinearity {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, params) = match text.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (text, None),
        };
        let no_params = |n: Nonlinearity| match params {
            None => Ok(n),
            Some(_) => Err(Error::invalid(format!("nonlinearity `{name}` takes no parameters"))),
        };
        match name {
            "zero" | "linear" => no_params(Nonlinearity::Zero),
            "cubic" => no_params(Nonlinearity::Cubic),
            "quintic" => no_params(Nonlinearity::Quintic),
            "cubic_plus_const" => {
                let c = params
                    .ok_or_else(|| Error::invalid("cubic_plus_const needs a constant, e.g. cubic_plus_const:1.0"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad constant in `{text}`")))?;
                Ok(Nonlinearity::CubicPlusConst(c))
            }
            _ => Err(Error::Lookup {
                what: "nonlinearity",
                name: text.to_string(),
                available: vec![
                    "zero".into(),
                    "cubic".into(),
                    "cubic_plus_const:<c>".into(),
                    "quintic".into(),
                ],
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// Wave: `f(u)`.
    pub fn f(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => u * u * u,
            Nonlinearity::CubicPlusConst(c) => u * u * u + c,
            Nonlinearity::Quintic => u.powi(5),
        }
    }

    /// Wave: `f′(u)`.
    pub fn df(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic | Nonlinearity::CubicPlusConst(_) => 3.0 * u * u,
            Nonlinearity::Quintic => 5.0 * u.powi(4),
        }
    }

    /// Wave: antiderivative `F` with `F′ = f`, `F(0) = 0`.
    pub fn antiderivative(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => 0.25 * u.powi(4),
            Nonlinearity::CubicPlusConst(c) => 0.25 * u.powi(4) + c * u,
            Nonlinearity::Quintic => u.powi(6) / 6.0,
        }
    }

    /// NLS: `∂_ū V(u, ū)`.
    pub fn grad_v(&self, u: Complex64) -> Complex64 {
        let m = u.norm_sqr();
        match *self {
            Nonlinearity::Zero => Complex64::new(0.0, 0.0),
            Nonlinearity::Cubic => u * m,
            Nonlinearity::CubicPlusConst(c) => u * m + c,
            Nonlinearity::Quintic => u * (m * m),
        }
    }

    /// NLS: `(∂²_{ūu} V, ∂²_{ūū} V)`.
    pub fn grad_v_derivatives(&self, u: Complex64) -> (Complex64, Complex64) {
        let m = u.norm_sqr();
        match *self {
            Nonlinearity::Zero => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
            Nonlinearity::Cubic | Nonlinearity::CubicPlusConst(_) => {
                (Complex64::new(2.0 * m, 0.0), u * u)
            }
            Nonlinearity::Quintic => (Complex64::new(3.0 * m * m, 0.0), u * u * u * u.conj() * 2.0),
        }
    }

    /// NLS: the potential `V(u, ū)`.
    pub fn potential(&self, u: Complex64) -> f64 {
        let m = u.norm_sqr();
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => 0.5 * m * m,
            Nonlinearity::CubicPlusConst(c) => 0.5 * m * m + 2.0 * c * u.re,
            Nonlinearity::Quintic => m * m * m / 3.0,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "zero"),
            Nonlinearity::Cubic => write!(f, "cubic"),
            Nonlinearity::CubicPlusConst(c) => write!(f, "cubic_plus_const:{c}"),
            Nonlinearity::Quintic => write!(f, "quintic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Cos,
    Sin,
    /// `e^{ikx}`
    Exp,
}

/// One term `amplitude · profile(kx)` of an initial field component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub component: usize,
    pub amplitude: f64,
    pub profile: Profile,
    pub k: i64,
}

impl Term {
    pub const fn new(component: usize, amplitude: f64, profile: Profile, k: i64) -> Self {
        Self {
            component,
            amplitude,
            profile,
            k,
        }
    }

    fn eval(&self, x: f64) -> Complex64 {
        let kx = self.k as f64 * x;
        let v = match self.profile {
            Profile::Cos => Complex64::new(kx.cos(), 0.0),
            Profile::Sin => Complex64::new(kx.sin(), 0.0),
            Profile::Exp => Complex64::from_polar(1.0, kx),
        };
        v * self.amplitude
    }
}

/// Samples a sum of trigonometric terms at the grid nodes and transforms it.
pub fn state_from_terms(grid: &Arc<SpectralGrid>, terms: &[Term]) -> Result<State> {
    let n = grid.n();
    let nodes = grid.nodes();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.components() * n];
    for t in terms {
        if t.component >= grid.components() {
            return Err(Error::invalid(format!("term targets missing component {}", t.component)));
        }
        for (j, &x) in nodes.iter().enumerate() {
            values[t.component * n + j] += t.eval(x);
        }
    }
    transform(grid, &values)
}

/// A semilinear problem `∂ₜU = AU + B(U)` on a spectral grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    kind: ProblemKind,
    grid: Arc<SpectralGrid>,
    nonlinearity: Nonlinearity,
    dealias: bool,
    radius: f64,
    initial: Vec<Term>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        kind: ProblemKind,
        grid: Arc<SpectralGrid>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if grid.symbol() != kind.symbol() || grid.copies() != 1 {
            return Err(Error::invalid(format!(
                "{kind:?} problems need a single-copy {:?} grid",
                kind.symbol()
            )));
        }
        Ok(Self {
            name: name.into(),
            kind,
            grid,
            nonlinearity,
            dealias: true,
            radius: f64::INFINITY,
            initial: Vec::new(),
        })
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    /// Radius of the ball on which pointwise values must stay.
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_initial(mut self, terms: Vec<Term>) -> Self {
        self.initial = terms;
        self
    }

    pub fn with_nonlinearity(mut self, nl: Nonlinearity) -> Self {
        self.nonlinearity = nl;
        self
    }

    /// Same problem on a grid with `n` modes.
    pub fn with_modes(mut self, n: usize) -> Result<Self> {
        self.grid = SpectralGrid::new(n, self.grid.bc(), self.kind.symbol())?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn initial_terms(&self) -> &[Term] {
        &self.initial
    }

    /// The catalogue's smooth band-limited initial data for this problem.
    pub fn initial_state(&self) -> Result<State> {
        state_from_terms(&self.grid, &self.initial)
    }

    fn guard(&self, values: &[Complex64]) -> Result<()> {
        if self.radius.is_finite() {
            let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if max_abs > self.radius {
                return Err(Error::DomainEscape {
                    max_abs,
                    radius: self.radius,
                });
            }
        }
        Ok(())
    }

    fn finish(&self, coeffs: &mut [Complex64], scale: Complex64, dealias: bool) {
        for (m, c) in coeffs.iter_mut().enumerate() {
            *c = if dealias && !self.grid.dealias_keeps(m) {
                Complex64::new(0.0, 0.0)
            } else {
                *c * scale
            };
        }
    }

    /// `B(U)`: `(0, −f(u))` for the wave system, `−i ∂_ū V(u, ū)` for NLS.
    pub fn evaluate_b(&self, u: &State) -> Result<State> {
        self.evaluate_b_with(u, self.dealias)
    }

    fn evaluate_b_with(&self, u: &State, dealias: bool) -> Result<State> {
        u.check_grid(&self.grid)?;
        let mut out = State::zeros(&self.grid);
        if self.nonlinearity.is_zero() {
            return Ok(out);
        }
        let nodes = component_to_nodes(u, 0);
        self.guard(&nodes)?;
        match self.kind {
            ProblemKind::Wave => {
                let fu = nodes
                    .iter()
                    .map(|v| Complex64::new(self.nonlinearity.f(v.re), 0.0))
                    .collect();
                let mut c = nodes_to_component(&self.grid, fu);
                self.finish(&mut c, Complex64::new(-1.0, 0.0), dealias);
                out.component_mut(1).copy_from_slice(&c);
            }
            ProblemKind::Nls => {
                let g = nodes.iter().map(|&v| self.nonlinearity.grad_v(v)).collect();
                let mut c = nodes_to_component(&self.grid, g);
                self.finish(&mut c, -I, dealias);
                out.component_mut(0).copy_from_slice(&c);
            }
        }
        Ok(out)
    }

    /// Derivative `DB(U)V`: `(0, −f′(u)·δu)` for the wave system,
    /// `−i(∂²_{ūu}V·δv + ∂²_{ūū}V·conj(δv))` for NLS.
    pub fn evaluate_db(&self, u: &State, v: &State) -> Result<State> {
        u.check_grid(&self.grid)?;
        v.check_grid(&self.grid)?;
        let mut out = State::zeros(&self.grid);
        if self.nonlinearity.is_zero() {
            return Ok(out);
        }
        let un = component_to_nodes(u, 0);
        self.guard(&un)?;
        let vn = component_to_nodes(v, 0);
        match self.kind {
            ProblemKind::Wave => {
                let prod = un
                    .iter()
                    .zip(&vn)
                    .map(|(a, b)| Complex64::new(self.nonlinearity.df(a.re) * b.re, 0.0))
                    .collect();
                let mut c = nodes_to_component(&self.grid, prod);
                self.finish(&mut c, Complex64::new(-1.0, 0.0), self.dealias);
                out.component_mut(1).copy_from_slice(&c);
            }
            ProblemKind::Nls => {
                let prod = un
                    .iter()
                    .zip(&vn)
                    .map(|(&a, &b)| {
                        let (duu, dubar) = self.nonlinearity.grad_v_derivatives(a);
                        duu * b + dubar * b.conj()
                    })
                    .collect();
                let mut c = nodes_to_component(&self.grid, prod);
                self.finish(&mut c, -I, self.dealias);
                out.component_mut(0).copy_from_slice(&c);
            }
        }
        Ok(out)
    }

    /// Size of the top-third modal tail of the undealiased `B(u)`: zero
    /// (to round-off) when `f(u)` is representable in the grid's basis, as
    /// for Dirichlet problems with `f(0) = 0`, and of order `|f(0)|/k` on the
    /// tail when the boundary compatibility fails.
    pub fn boundary_defect(&self, u: &State) -> Result<f64> {
        let raw = self.evaluate_b_with(u, false)?;
        let g = &self.grid;
        let n = g.n();
        let mut tail = 0.0;
        for r in 0..g.components() {
            for m in 0..n {
                if !g.dealias_keeps(m) {
                    tail += g.mode_weight(m) * raw.coeffs()[r * n + m].norm_sqr();
                }
            }
        }
        Ok(tail.sqrt())
    }
}

/// A semilinear system the stepper can advance.
pub trait Semilinear: Sync {
    fn grid(&self) -> &Arc<SpectralGrid>;

    /// `B(U)`.
    fn nonlinear(&self, u: &State) -> Result<State>;

    fn describe(&self) -> String;

    fn is_linear(&self) -> bool {
        false
    }
}

impl Semilinear for ProblemSpec {
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    fn nonlinear(&self, u: &State) -> Result<State> {
        self.evaluate_b(u)
    }

    fn describe(&self) -> String {
        format!(
            "{} ({:?}, {:?}, n = {}, {})",
            self.name,
            self.kind,
            self.grid.bc(),
            self.grid.n(),
            self.nonlinearity
        )
    }

    fn is_linear(&self) -> bool {
        self.nonlinearity.is_zero()
    }
}

/// The variational extension `Ũ = (U, V)`, `Ã = diag(A, A)`,
/// `B̃(Ũ) = (B(U), DB(U)V)`.
#[derive(Debug, Clone)]
pub struct TangentSystem<'a> {
    problem: &'a ProblemSpec,
    grid: Arc<SpectralGrid>,
}

impl<'a> TangentSystem<'a> {
    pub fn new(problem: &'a ProblemSpec) -> Self {
        Self {
            problem,
            grid: problem.grid.with_copies(2),
        }
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem
    }

    pub fn combine(&self, u: &State, v: &State) -> Result<State> {
        State::stack(&self.grid, &[u, v])
    }

    pub fn split(&self, w: &State) -> (State, State) {
        let mut parts = w.split_copies().into_iter();
        let u = parts.next().expect("two copies");
        let v = parts.next().expect("two copies");
        (u, v)
    }
}

impl Semilinear for TangentSystem<'_> {
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    fn nonlinear(&self, w: &State) -> Result<State> {
        w.check_grid(&self.grid)?;
        // split onto the problem's own grid so the check in evaluate_b passes
        let (u, v) = self.split(w);
        let u = State::from_coeffs(&self.problem.grid, u.into_coeffs())?;
        let v = State::from_coeffs(&self.problem.grid, v.into_coeffs())?;
        let bu = self.problem.evaluate_b(&u)?;
        let dbv = self.problem.evaluate_db(&u, &v)?;
        State::stack(&self.grid, &[&bu, &dbv])
    }

    fn describe(&self) -> String {
        format!("tangent extension of {}", self.problem.describe())
    }

    fn is_linear(&self) -> bool {
        self.problem.is_linear()
    }
}

struct CatalogueEntry {
    name: &'static str,
    kind: ProblemKind,
    bc: BoundaryCondition,
    n: usize,
    nonlinearity: Nonlinearity,
    initial: &'static [Term],
}

const NLS_PERIODIC_DATA: &[Term] = &[
    Term::new(0, 0.8, Profile::Exp, 1),
    Term::new(0, 0.3, Profile::Exp, -4),
];
const WAVE_PERIODIC_DATA: &[Term] = &[
    Term::new(0, 1.0, Profile::Cos, 1),
    Term::new(0, 0.2, Profile::Sin, 20),
];
const WAVE_SINE_DATA: &[Term] = &[
    Term::new(0, 1.0, Profile::Sin, 1),
    Term::new(0, 0.3, Profile::Sin, 3),
];
const WAVE_COSINE_DATA: &[Term] = &[
    Term::new(0, 1.0, Profile::Cos, 1),
    Term::new(0, 0.3, Profile::Cos, 3),
];
const NLS_SINE_DATA: &[Term] = &[
    Term::new(0, 0.8, Profile::Sin, 1),
    Term::new(0, 0.3, Profile::Sin, 3),
];

const CATALOGUE: &[CatalogueEntry] = &[
    CatalogueEntry {
        name: "nls-cubic-periodic",
        kind: ProblemKind::Nls,
        bc: BoundaryCondition::Periodic,
        n: 64,
        nonlinearity: Nonlinearity::Cubic,
        initial: NLS_PERIODIC_DATA,
    },
    CatalogueEntry {
        name: "nls-linear-periodic",
        kind: ProblemKind::Nls,
        bc: BoundaryCondition::Periodic,
        n: 64,
        nonlinearity: Nonlinearity::Zero,
        initial: NLS_PERIODIC_DATA,
    },
    CatalogueEntry {
        name: "nls-cubic-dirichlet",
        kind: ProblemKind::Nls,
        bc: BoundaryCondition::Dirichlet,
        n: 64,
        nonlinearity: Nonlinearity::Cubic,
        initial: NLS_SINE_DATA,
    },
    CatalogueEntry {
        name: "wave-cubic-periodic",
        kind: ProblemKind::Wave,
        bc: BoundaryCondition::Periodic,
        n: 64,
        nonlinearity: Nonlinearity::Cubic,
        initial: WAVE_PERIODIC_DATA,
    },
    CatalogueEntry {
        name: "wave-linear-periodic",
        kind: ProblemKind::Wave,
        bc: BoundaryCondition::Periodic,
        n: 64,
        nonlinearity: Nonlinearity::Zero,
        initial: WAVE_PERIODIC_DATA,
    },
    CatalogueEntry {
        name: "wave-dirichlet-compatible",
        kind: ProblemKind::Wave,
        bc: BoundaryCondition::Dirichlet,
        n: 256,
        nonlinearity: Nonlinearity::Cubic,
        initial: WAVE_SINE_DATA,
    },
    CatalogueEntry {
        name: "wave-dirichlet-incompatible",
        kind: ProblemKind::Wave,
        bc: BoundaryCondition::Dirichlet,
        n: 256,
        nonlinearity: Nonlinearity::CubicPlusConst(1.0),
        initial: WAVE_SINE_DATA,
    },
    CatalogueEntry {
        name: "wave-neumann",
        kind: ProblemKind::Wave,
        bc: BoundaryCondition::Neumann,
        n: 64,
        nonlinearity: Nonlinearity::Cubic,
        initial: WAVE_COSINE_DATA,
    },
];

/// The named problem catalogue with default grids and initial data.
pub fn standard_problems() -> Vec<ProblemSpec> {
    CATALOGUE.iter().map(build_entry).collect()
}

pub fn problem_names() -> Vec<String> {
    CATALOGUE.iter().map(|e| e.name.to_string()).collect()
}

fn build_entry(e: &CatalogueEntry) -> ProblemSpec {
    let grid = SpectralGrid::new(e.n, e.bc, e.kind.symbol()).expect("catalogue grids are valid");
    ProblemSpec::new(e.name, e.kind, grid, e.nonlinearity)
        .expect("catalogue entries are consistent")
        .with_initial(e.initial.to_vec())
}

pub fn lookup(name: &str) -> Result<ProblemSpec> {
    CATALOGUE
        .iter()
        .find(|e| e.name == name)
        .map(build_entry)
        .ok_or_else(|| Error::Lookup {
            what: "problem",
            name: name.to_string(),
            available: problem_names(),
        })
}

/// Random band-limited state with modes `|k| ≤ band`, coefficients decaying
/// like `e^{−|k|/2}`. Wave fields on periodic grids are kept real.
pub fn random_smooth_state(grid: &Arc<SpectralGrid>, band: i64, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = State::zeros(grid);
    let real_fields = grid.symbol() == Symbol::Wave;
    let n = grid.n();
    for r in 0..grid.components() {
        for m in 0..n {
            let k = grid.wavenumbers()[m];
            if k.abs() > band || (real_fields && k < 0) {
                continue;
            }
            let decay = (-(k.abs() as f64) / 2.0).exp();
            let mut c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
            if real_fields && grid.bc() != BoundaryCondition::Periodic {
                c.im = 0.0;
            }
            if real_fields && grid.bc() == BoundaryCondition::Periodic {
                let partner = grid.slot_of(-k);
                match partner {
                    Some(p) if p != m => u.component_mut(r)[p] = c.conj(),
                    _ => c.im = 0.0,
                }
            }
            u.component_mut(r)[m] = c;
        }
    }
    u
}

/// State with coefficient magnitudes `|u_k| ~ (1 + |k|)^{−decay}` and random
/// phases over every mode of the grid.
pub fn rough_state(grid: &Arc<SpectralGrid>, decay: f64, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = State::zeros(grid);
    for r in 0..grid.components() {
        for m in 0..grid.n() {
            let k = grid.wavenumbers()[m].abs() as f64;
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            u.component_mut(r)[m] = Complex64::from_polar((1.0 + k).powf(-decay), phase);
        }
    }
    u
}

/// Outcome of the empirical Sobolev-algebra check `‖uv‖_{H₁} ≤ c‖u‖_{H₁}‖v‖_{H₁}`.
#[derive(Debug, Clone, Serialize)]
pub struct AlgebraProbe {
    /// Calibrated constant: twice the largest ratio seen in the calibration
    /// samples.
    pub constant: f64,
    pub calibration_max: f64,
    pub overall_max: f64,
    pub violations: usize,
    pub samples: usize,
}

fn h1_norm(grid: &SpectralGrid, coeffs: &[Complex64]) -> f64 {
    grid.wavenumbers()
        .iter()
        .enumerate()
        .map(|(m, &k)| grid.mode_weight(m) * (1.0 + (k * k) as f64) * coeffs[m].norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Spot-checks the algebra property of `H₁` on the circle with random real
/// trigonometric polynomials of degree `band`, normalized to `H₁` norm at
/// most one. Products are formed on a grid fine enough to be alias-free.
pub fn algebra_constant_probe(band: i64, samples: usize, calibration: usize, seed: u64) -> AlgebraProbe {
    let n = (4 * band as usize + 4).next_power_of_two();
    let grid = SpectralGrid::new(n, BoundaryCondition::Periodic, Symbol::Wave)
        .expect("power-of-two periodic grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        let u = random_smooth_state(&grid, band, rng.gen());
        let mut c = u.component(0).to_vec();
        let norm = h1_norm(&grid, &c);
        let target: f64 = rng.gen_range(0.05..1.0);
        c.iter_mut().for_each(|x| *x *= target / norm);
        c
    };
    let mut calibration_max = 0.0_f64;
    let mut overall_max = 0.0_f64;
    let mut ratios = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let mut an = a.clone();
        grid.synthesize(&mut an);
        let mut bn = b.clone();
        grid.synthesize(&mut bn);
        let mut prod: Vec<Complex64> = an.iter().zip(&bn).map(|(x, y)| x * y).collect();
        grid.analyze(&mut prod);
        let ratio = h1_norm(&grid, &prod) / (h1_norm(&grid, &a) * h1_norm(&grid, &b));
        ratios.push(ratio);
    }
    for (i, &r) in ratios.iter().enumerate() {
        if i < calibration {
            calibration_max = calibration_max.max(r);
        }
        overall_max = overall_max.max(r);
    }
    let constant = 2.0 * calibration_max;
    let violations = ratios.iter().skip(calibration).filter(|&&r| r > constant).count();
    AlgebraProbe {
        constant,
        calibration_max,
        overall_max,
        violations,
        samples,
    }
}
