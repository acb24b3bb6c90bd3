use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default highest rung of the Sobolev scale available to norm queries.
pub const DEFAULT_K_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Fourier modes on `[0, 2π)`.
    Periodic,
    /// Sine modes on `[0, π]`.
    Dirichlet,
    /// Cosine modes on `[0, π]`.
    Neumann,
}

impl BoundaryCondition {
    pub fn domain_length(self) -> f64 {
        match self {
            BoundaryCondition::Periodic => 2.0 * PI,
            _ => PI,
        }
    }
}

/// Per-mode linear symbol of the generator `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symbol {
    /// `A = i∂ₓₓ`: scalar `λ_k = −i k²`.
    Schrodinger,
    /// `A = [[0, 1], [∂ₓₓ, 0]]`: 2×2 real block `[[0, 1], [−k², 0]]`.
    Wave,
}

impl Symbol {
    pub fn block_size(self) -> usize {
        match self {
            Symbol::Schrodinger => 1,
            Symbol::Wave => 2,
        }
    }

    /// Row-major `block_size × block_size` symbol at wavenumber `k`.
    pub fn block(self, k: i64) -> [[Complex64; 2]; 2] {
        let k2 = (k * k) as f64;
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Symbol::Schrodinger => [[Complex64::new(0.0, -k2), zero], [zero, zero]],
            Symbol::Wave => [
                [zero, Complex64::new(1.0, 0.0)],
                [Complex64::new(-k2, 0.0), zero],
            ],
        }
    }
}

enum Plan {
    Periodic {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    /// Real-to-real transforms computed through an FFT of the odd (sine) or
    /// even (cosine) extension.
    Extended { fft: Arc<dyn Fft<f64>> },
}

/// A spectral discretization of one of the model operators: the mode set,
/// boundary condition, domain and the per-mode symbol of `A`.
///
/// `copies > 1` stacks independent copies of the base system, as used by the
/// variational (tangent) extension `diag(A, A)`.
pub struct SpectralGrid {
    n: usize,
    bc: BoundaryCondition,
    symbol: Symbol,
    copies: usize,
    k_max: usize,
    wavenumbers: Vec<i64>,
    plan: Arc<Plan>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("bc", &self.bc)
            .field("symbol", &self.symbol)
            .field("copies", &self.copies)
            .field("k_max", &self.k_max)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.bc == other.bc
            && self.symbol == other.symbol
            && self.copies == other.copies
            && self.k_max == other.k_max
    }
}

impl SpectralGrid {
    pub fn new(n: usize, bc: BoundaryCondition, symbol: Symbol) -> Result<Arc<Self>> {
        match bc {
            BoundaryCondition::Periodic if n < 2 || !n.is_multiple_of(2) => {
                return Err(Error::invalid(format!(
                    "periodic grids need an even mode count >= 2, got {n}"
                )))
            }
            BoundaryCondition::Neumann if n < 2 => {
                return Err(Error::invalid("neumann grids need at least 2 modes"))
            }
            BoundaryCondition::Dirichlet if n < 1 => {
                return Err(Error::invalid("dirichlet grids need at least 1 mode"))
            }
            _ => {}
        }
        let mut planner = FftPlanner::new();
        let (wavenumbers, plan): (Vec<i64>, Plan) = match bc {
            BoundaryCondition::Periodic => {
                let half = (n / 2) as i64;
                let ks = (0..n as i64)
                    .map(|j| if j <= half { j } else { j - n as i64 })
                    .collect();
                (
                    ks,
                    Plan::Periodic {
                        forward: planner.plan_fft_forward(n),
                        inverse: planner.plan_fft_inverse(n),
                    },
                )
            }
            BoundaryCondition::Dirichlet => (
                (1..=n as i64).collect(),
                Plan::Extended {
                    fft: planner.plan_fft_forward(2 * (n + 1)),
                },
            ),
            BoundaryCondition::Neumann => (
                (0..n as i64).collect(),
                Plan::Extended {
                    fft: planner.plan_fft_forward(2 * (n - 1)),
                },
            ),
        };
        Ok(Arc::new(Self {
            n,
            bc,
            symbol,
            copies: 1,
            k_max: DEFAULT_K_MAX,
            wavenumbers,
            plan: Arc::new(plan),
        }))
    }

    /// Same grid with `copies` stacked copies of the base system.
    pub fn with_copies(&self, copies: usize) -> Arc<Self> {
        assert!(copies >= 1, "at least one copy");
        Arc::new(Self {
            copies,
            wavenumbers: self.wavenumbers.clone(),
            plan: Arc::clone(&self.plan),
            ..*self
        })
    }

    /// Same grid with a different cap on the Sobolev scale index.
    pub fn with_k_max(&self, k_max: usize) -> Arc<Self> {
        Arc::new(Self {
            k_max,
            wavenumbers: self.wavenumbers.clone(),
            plan: Arc::clone(&self.plan),
            ..*self
        })
    }

    /// The single-copy grid underlying this one.
    pub fn base(&self) -> Arc<Self> {
        self.with_copies(1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn symbol(&self) -> Symbol {
        self.symbol
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn length(&self) -> f64 {
        self.bc.domain_length()
    }

    /// Components per copy (1 for Schrödinger, 2 for wave).
    pub fn block_size(&self) -> usize {
        self.symbol.block_size()
    }

    /// Total number of solution components, `block_size · copies`.
    pub fn components(&self) -> usize {
        self.block_size() * self.copies
    }

    /// Wavenumber stored at each coefficient slot. Periodic grids use FFT
    /// order `0, 1, …, n/2, −n/2+1, …, −1`.
    pub fn wavenumbers(&self) -> &[i64] {
        &self.wavenumbers
    }

    pub fn slot_of(&self, k: i64) -> Option<usize> {
        self.wavenumbers.iter().position(|&w| w == k)
    }

    /// L² weight of one basis function: `‖e_k‖²` on the domain.
    pub fn mode_weight(&self, slot: usize) -> f64 {
        match self.bc {
            BoundaryCondition::Periodic => 2.0 * PI,
            BoundaryCondition::Dirichlet => PI / 2.0,
            BoundaryCondition::Neumann if slot == 0 => PI,
            BoundaryCondition::Neumann => PI / 2.0,
        }
    }

    /// Whether the 2/3 rule keeps this slot when dealiasing.
    pub fn dealias_keeps(&self, slot: usize) -> bool {
        let k = self.wavenumbers[slot].unsigned_abs() as usize;
        match self.bc {
            BoundaryCondition::Periodic => 3 * k <= self.n,
            BoundaryCondition::Dirichlet => 3 * k <= 2 * self.n,
            BoundaryCondition::Neumann => 3 * k <= 2 * (self.n - 1),
        }
    }

    /// Collocation nodes: `2πj/n` (periodic), interior `jπ/(n+1)`
    /// (Dirichlet) or `jπ/(n−1)` including both endpoints (Neumann).
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.n;
        match self.bc {
            BoundaryCondition::Periodic => (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect(),
            BoundaryCondition::Dirichlet => {
                (1..=n).map(|j| PI * j as f64 / (n + 1) as f64).collect()
            }
            BoundaryCondition::Neumann => (0..n).map(|j| PI * j as f64 / (n - 1) as f64).collect(),
        }
    }

    /// Value of the basis function at `x`.
    pub fn basis(&self, slot: usize, x: f64) -> Complex64 {
        let k = self.wavenumbers[slot] as f64;
        match self.bc {
            BoundaryCondition::Periodic => Complex64::from_polar(1.0, k * x),
            BoundaryCondition::Dirichlet => Complex64::new((k * x).sin(), 0.0),
            BoundaryCondition::Neumann => Complex64::new((k * x).cos(), 0.0),
        }
    }

    /// Value of the basis function's x-derivative at `x`.
    pub fn basis_dx(&self, slot: usize, x: f64) -> Complex64 {
        let k = self.wavenumbers[slot] as f64;
        match self.bc {
            BoundaryCondition::Periodic => Complex64::new(0.0, k) * Complex64::from_polar(1.0, k * x),
            BoundaryCondition::Dirichlet => Complex64::new(k * (k * x).cos(), 0.0),
            BoundaryCondition::Neumann => Complex64::new(-k * (k * x).sin(), 0.0),
        }
    }

    /// Hash of the discretization identity (mode count, boundary condition,
    /// symbol); copies and scale cap do not change the operator per mode.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.n, self.bc, self.symbol).hash(&mut h);
        h.finish()
    }

    /// Nodal values → modal coefficients for one scalar field, in place.
    pub(crate) fn analyze(&self, values: &mut [Complex64]) {
        debug_assert_eq!(values.len(), self.n);
        let n = self.n;
        match self.plan.as_ref() {
            Plan::Periodic { forward, .. } => {
                forward.process(values);
                let scale = 1.0 / n as f64;
                values.iter_mut().for_each(|v| *v *= scale);
            }
            Plan::Extended { fft } => match self.bc {
                BoundaryCondition::Dirichlet => {
                    let y = sine_extension_fft(fft.as_ref(), values);
                    let scale = Complex64::new(0.0, 1.0 / (n + 1) as f64);
                    for (k, v) in values.iter_mut().enumerate() {
                        *v = y[k + 1] * scale;
                    }
                }
                BoundaryCondition::Neumann => {
                    let m = n - 1;
                    let y = cosine_extension_fft(fft.as_ref(), values);
                    for (k, v) in values.iter_mut().enumerate() {
                        let ck = if k == 0 || k == m { 1.0 } else { 2.0 };
                        *v = y[k] * (0.5 * ck / m as f64);
                    }
                }
                BoundaryCondition::Periodic => unreachable!(),
            },
        }
    }

    /// Modal coefficients → nodal values for one scalar field, in place.
    pub(crate) fn synthesize(&self, coeffs: &mut [Complex64]) {
        debug_assert_eq!(coeffs.len(), self.n);
        let n = self.n;
        match self.plan.as_ref() {
            Plan::Periodic { inverse, .. } => inverse.process(coeffs),
            Plan::Extended { fft } => match self.bc {
                BoundaryCondition::Dirichlet => {
                    let y = sine_extension_fft(fft.as_ref(), coeffs);
                    let scale = Complex64::new(0.0, 0.5);
                    for (j, v) in coeffs.iter_mut().enumerate() {
                        *v = y[j + 1] * scale;
                    }
                }
                BoundaryCondition::Neumann => {
                    let m = n - 1;
                    coeffs[0] *= 2.0;
                    coeffs[m] *= 2.0;
                    let y = cosine_extension_fft(fft.as_ref(), coeffs);
                    for (j, v) in coeffs.iter_mut().enumerate() {
                        *v = y[j] * 0.5;
                    }
                }
                BoundaryCondition::Periodic => unreachable!(),
            },
        }
    }
}

/// FFT of `[0, x₁, …, x_n, 0, −x_n, …, −x₁]`, whose entries are
/// `−2i Σ_j x_j sin(kjπ/(n+1))`.
fn sine_extension_fft(fft: &dyn Fft<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let len = 2 * (n + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (j, &v) in x.iter().enumerate() {
        buf[j + 1] = v;
        buf[len - j - 1] = -v;
    }
    fft.process(&mut buf);
    buf
}

/// FFT of the even extension `[x₀, …, x_m, x_{m−1}, …, x₁]`, whose entries
/// are `2 Σ''_j x_j cos(kjπ/m)` (endpoints halved).
fn cosine_extension_fft(fft: &dyn Fft<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len() - 1;
    let len = 2 * m;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[..=m].copy_from_slice(x);
    for j in 1..m {
        buf[len - j] = x[j];
    }
    fft.process(&mut buf);
    buf
}
