//! Experiment configuration: parsing with line/key diagnostics and
//! resolution of every default into an explicit, echoable form.

use std::fmt;
use std::path::Path;

use irk_spectral::harness::{dyadic_steps, StudyOptions};
use irk_spectral::problems::{
    lookup, random_smooth_state, rough_state, Nonlinearity, ProblemKind, ProblemSpec, Term,
};
use irk_spectral::spectral::State;
use irk_spectral::stepper::SolverConfig;
use irk_spectral::tableau::ButcherTableau;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Convergence,
    Conservation,
    Stability,
    Smoothness,
    DirichletCompat,
    TangentCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::Conservation => "conservation",
            Experiment::Stability => "stability",
            Experiment::Smoothness => "smoothness",
            Experiment::DirichletCompat => "dirichlet-compat",
            Experiment::TangentCheck => "tangent-check",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_band() -> i64 {
    4
}

fn default_decay() -> f64 {
    1.1
}

/// Initial data, or the perturbation direction of a tangent check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// The problem's catalogue data.
    Catalogue,
    /// Explicit trigonometric terms.
    Terms { terms: Vec<Term> },
    /// Random band-limited data drawn from the config seed.
    RandomSmooth {
        #[serde(default = "default_band")]
        band: i64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Coefficients `|u_k| ~ (1 + |k|)^{−decay}` with random phases.
    Rough {
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl InitialSpec {
    pub fn build(&self, p: &ProblemSpec, seed: u64) -> irk_spectral::Result<State> {
        let mut u = match self {
            InitialSpec::Catalogue => return p.initial_state(),
            InitialSpec::Terms { terms } => return p.clone().with_initial(terms.clone()).initial_state(),
            InitialSpec::RandomSmooth { band, .. } => random_smooth_state(p.grid(), *band, seed),
            InitialSpec::Rough { decay, .. } => rough_state(p.grid(), *decay, seed),
        };
        if let InitialSpec::RandomSmooth { scale, .. } | InitialSpec::Rough { scale, .. } = self {
            u.scale((*scale).into());
        }
        Ok(u)
    }
}

/// An experiment configuration. After [`ExperimentConfig::resolve`] every
/// field that applies to the experiment is filled in and the rest are
/// `None`, so serializing it echoes exactly what ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tableau: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "T", alias = "t_final", default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    /// Conservation: steps to take. Stability: power of `S(hA)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_warn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_checks: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dealias: Option<bool>,
    /// Domain guard radius; `null` means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    /// Tangent check: perturbation direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<InitialSpec>,
    /// Smoothness: difference order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Tangent check: finite-difference increment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Allowed `|fitted_order − p|`; defaults to `0.075 p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_tol: Option<f64>,
    /// Stability: allowed excess of the amplification over one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplification_tol: Option<f64>,
    /// Smoothness: the probe passes when its tail ratio is within
    /// `1 + bounded_tol` (or beyond it when `expect_bounded` is false).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounded_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_bounded: Option<bool>,
    /// Base name of the artifacts, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A configuration error, located by key and, when found, source line.
#[derive(Debug)]
pub struct ConfigError {
    pub source: String,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        if let Some(key) = &self.key {
            write!(f, ": key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Line of the first occurrence of `"key"` in the document.
fn locate(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let needle = format!("\"{leaf}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Strips serde_json's trailing ` at line L column C`.
fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) if msg[i..].contains(" column ") => &msg[..i],
        _ => msg,
    }
}

/// A problem, tableau and initial data ready to run.
#[derive(Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub problem: Option<ProblemSpec>,
    pub tableau: ButcherTableau,
}

impl Resolved {
    pub fn opts(&self) -> StudyOptions {
        let c = &self.config;
        StudyOptions {
            fp_tol: c.fp_tol.expect("resolved"),
            fp_max_iters: c.fp_max_iters.expect("resolved"),
            contraction_warn: c.contraction_warn.expect("resolved"),
            debug_checks: c.debug_checks.expect("resolved"),
            ..StudyOptions::default()
        }
    }

    pub fn solver(&self, h: f64) -> SolverConfig {
        let o = self.opts();
        SolverConfig {
            h,
            fp_tol: o.fp_tol,
            fp_max_iters: o.fp_max_iters,
            contraction_warn: o.contraction_warn,
            debug_checks: o.debug_checks,
        }
    }

    pub fn h_list(&self) -> &[f64] {
        self.config.h_list.as_deref().expect("resolved")
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem.as_ref().expect("experiment uses a problem")
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.expect("resolved")
    }

    pub fn order_tol(&self) -> f64 {
        self.config.order_tol.expect("resolved")
    }

    pub fn output(&self) -> &str {
        self.config.output.as_deref().expect("resolved")
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            ConfigError {
                source: source.to_string(),
                key: (path != ".").then_some(path),
                line: Some(inner.line()),
                column: Some(inner.column()),
                message: strip_position(&inner.to_string()).to_string(),
            }
        })
    }

    /// Validates the configuration, fills in every default and builds
    /// the problem and tableau. `text` is the config source, used only to
    /// report lines; `base` is the directory tableau paths are relative to.
    pub fn resolve(mut self, text: &str, source: &str, base: &Path) -> Result<Resolved, ConfigError> {
        let err = |key: &str, message: String| ConfigError {
            source: source.to_string(),
            key: Some(key.to_string()),
            line: locate(text, key),
            column: None,
            message,
        };
        let exp = self.experiment;
        let uses_problem = exp != Experiment::DirichletCompat;
        let uses_t = matches!(
            exp,
            Experiment::Convergence | Experiment::DirichletCompat | Experiment::TangentCheck
        );

        // Problem.
        let problem = if uses_problem {
            let name = self
                .problem
                .clone()
                .ok_or_else(|| err("problem", format!("required by {}", exp.name())))?;
            let mut p = lookup(&name).map_err(|e| err("problem", e.to_string()))?;
            if let Some(n) = self.n {
                p = p.with_modes(n).map_err(|e| err("n", e.to_string()))?;
            }
            if let Some(nl) = &self.nonlinearity {
                let nl = Nonlinearity::parse(nl).map_err(|e| err("nonlinearity", e.to_string()))?;
                p = p.with_nonlinearity(nl);
            }
            if let Some(d) = self.dealias {
                p = p.with_dealias(d);
            }
            if let Some(r) = self.radius {
                if r.is_nan() || r <= 0.0 {
                    return Err(err("radius", format!("must be positive, got {r}")));
                }
                p = p.with_radius(r);
            }
            self.n = Some(p.grid().n());
            self.nonlinearity = Some(p.nonlinearity().to_string());
            self.dealias = Some(p.dealias());
            self.radius = p.radius().is_finite().then_some(p.radius());
            Some(p)
        } else {
            for (key, set) in [
                ("problem", self.problem.is_some()),
                ("nonlinearity", self.nonlinearity.is_some()),
                ("dealias", self.dealias.is_some()),
                ("radius", self.radius.is_some()),
                ("initial", self.initial.is_some()),
            ] {
                if set {
                    return Err(err(key, format!("not used by {}", exp.name())));
                }
            }
            None
        };

        // Tableau.
        let descriptor = self.tableau.clone().unwrap_or_else(|| "gl:1".to_string());
        let located = match descriptor.strip_prefix("gl:") {
            Some(_) => descriptor.clone(),
            None if Path::new(&descriptor).is_absolute() => descriptor.clone(),
            None => base.join(&descriptor).display().to_string(),
        };
        let tableau = ButcherTableau::resolve(&located).map_err(|e| err("tableau", e.to_string()))?;
        self.tableau = Some(descriptor);

        // Step sizes.
        let h_list = match (&self.h_list, self.h_max, self.levels) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(err("h_list", "give either h_list or (h_max, levels), not both".into()))
            }
            (Some(h), None, None) => h.clone(),
            (None, Some(h), Some(l)) => {
                if !(h.is_finite() && h > 0.0) {
                    return Err(err("h_max", format!("must be positive, got {h}")));
                }
                if l == 0 {
                    return Err(err("levels", "must be at least 1".into()));
                }
                dyadic_steps(h, l)
            }
            (None, Some(_), None) => return Err(err("h_max", "needs `levels` as well".into())),
            (None, None, Some(_)) => return Err(err("levels", "needs `h_max` as well".into())),
            (None, None, None) => return Err(err("h_list", "give h_list or (h_max, levels)".into())),
        };
        if h_list.is_empty() {
            return Err(err("h_list", "must not be empty".into()));
        }
        if let Some(h) = h_list.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(err("h_list", format!("step sizes must be positive, got {h}")));
        }
        let decreasing = h_list.windows(2).all(|w| w[1] < w[0]);
        if !decreasing && exp != Experiment::Stability {
            return Err(err("h_list", "step sizes must be strictly decreasing".into()));
        }
        self.h_list = Some(h_list);
        self.h_max = None;
        self.levels = None;

        // Horizon and step counts.
        if uses_t {
            let t = self.t_final.ok_or_else(|| err("T", format!("required by {}", exp.name())))?;
            if !(t.is_finite() && t > 0.0) {
                return Err(err("T", format!("must be positive, got {t}")));
            }
        }
        match exp {
            Experiment::Conservation => {
                if self.h_list.as_ref().map_or(0, Vec::len) != 1 {
                    return Err(err("h_list", "conservation runs take a single step size".into()));
                }
                let h = self.h_list.as_ref().expect("set above")[0];
                let steps = match (self.steps, self.t_final) {
                    (Some(s), _) => s,
                    (None, Some(t)) => irk_spectral::harness::step_count(t, h)
                        .map_err(|e| err("T", e.to_string()))?,
                    (None, None) => return Err(err("steps", "give `steps` or `T`".into())),
                };
                if steps == 0 {
                    return Err(err("steps", "must be at least 1".into()));
                }
                self.steps = Some(steps);
                self.t_final = Some(steps as f64 * h);
            }
            Experiment::Stability => {
                self.steps = Some(self.steps.unwrap_or(100));
                self.t_final = None;
            }
            _ => {
                if self.steps.is_some() {
                    return Err(err("steps", format!("not used by {}", exp.name())));
                }
                if !uses_t {
                    self.t_final = None;
                }
            }
        }

        // Solver settings.
        let defaults = StudyOptions::default();
        let fp_tol = self.fp_tol.unwrap_or(defaults.fp_tol);
        if fp_tol.is_nan() || fp_tol <= 0.0 {
            return Err(err("fp_tol", format!("must be positive, got {fp_tol}")));
        }
        self.fp_tol = Some(fp_tol);
        self.fp_max_iters = Some(self.fp_max_iters.unwrap_or(defaults.fp_max_iters));
        if self.fp_max_iters == Some(0) {
            return Err(err("fp_max_iters", "must be at least 1".into()));
        }
        self.contraction_warn = Some(self.contraction_warn.unwrap_or(defaults.contraction_warn));
        self.debug_checks = Some(self.debug_checks.unwrap_or(false));
        self.seed = Some(self.seed.unwrap_or(0));

        // Data.
        if uses_problem && exp != Experiment::Stability {
            self.initial = Some(self.initial.take().unwrap_or(InitialSpec::Catalogue));
        } else if exp == Experiment::Stability && self.initial.is_some() {
            return Err(err("initial", "not used by stability".into()));
        }
        let only = |key: &str, set: bool, wanted: Experiment| -> Result<(), ConfigError> {
            if set && exp != wanted {
                Err(err(key, format!("only used by {}", wanted.name())))
            } else {
                Ok(())
            }
        };
        only("direction", self.direction.is_some(), Experiment::TangentCheck)?;
        only("eps", self.eps.is_some(), Experiment::TangentCheck)?;
        only("fd_tol", self.fd_tol.is_some(), Experiment::TangentCheck)?;
        only("q", self.q.is_some(), Experiment::Smoothness)?;
        only("bounded_tol", self.bounded_tol.is_some(), Experiment::Smoothness)?;
        only("expect_bounded", self.expect_bounded.is_some(), Experiment::Smoothness)?;
        only("mass_tol", self.mass_tol.is_some(), Experiment::Conservation)?;
        only("amplification_tol", self.amplification_tol.is_some(), Experiment::Stability)?;

        let p = tableau.order() as f64;
        match exp {
            Experiment::Convergence | Experiment::DirichletCompat => {
                self.order_tol = Some(self.order_tol.unwrap_or(0.075 * p));
            }
            Experiment::TangentCheck => {
                self.order_tol = Some(self.order_tol.unwrap_or(0.075 * p));
                self.direction = Some(self.direction.take().unwrap_or(InitialSpec::RandomSmooth {
                    band: default_band(),
                    scale: 1.0,
                }));
                self.eps = Some(self.eps.unwrap_or(1e-5));
                self.fd_tol = Some(self.fd_tol.unwrap_or(1e-5));
            }
            Experiment::Conservation => {
                self.mass_tol = Some(self.mass_tol.unwrap_or(1e-9));
            }
            Experiment::Stability => {
                self.amplification_tol = Some(self.amplification_tol.unwrap_or(1e-13));
            }
            Experiment::Smoothness => {
                let q = self.q.unwrap_or(2);
                if q > 4 {
                    return Err(err("q", format!("difference order {q} exceeds 4")));
                }
                self.q = Some(q);
                self.bounded_tol = Some(self.bounded_tol.unwrap_or(0.05));
                self.expect_bounded = Some(self.expect_bounded.unwrap_or(true));
            }
        }
        if self.order_tol.is_some()
            && !matches!(
                exp,
                Experiment::Convergence | Experiment::DirichletCompat | Experiment::TangentCheck
            )
        {
            return Err(err("order_tol", format!("not used by {}", exp.name())));
        }
        if exp == Experiment::DirichletCompat && self.n.is_none() {
            self.n = Some(
                lookup(irk_spectral::harness::DIRICHLET_COMPATIBLE)
                    .expect("catalogue entry")
                    .grid()
                    .n(),
            );
        }
        let output = self.output.take().unwrap_or_else(|| exp.name().to_string());
        if output.is_empty() || Path::new(&output).is_absolute() || output.contains("..") {
            return Err(err("output", format!("must be a plain relative name, got `{output}`")));
        }
        self.output = Some(output);
        if let (Some(p), Some(InitialSpec::Terms { terms })) = (&problem, &self.initial) {
            if let Some(t) = terms.iter().find(|t| t.component >= p.grid().components()) {
                return Err(err(
                    "initial",
                    format!("term targets component {} of a {}-component problem", t.component, p.grid().components()),
                ));
            }
        }
        if let Some(p) = &problem {
            if exp == Experiment::Conservation && p.kind() == ProblemKind::Wave {
                self.mass_tol = None;
            }
        }
        Ok(Resolved {
            config: self,
            problem,
            tableau,
        })
    }
}
