//! Butcher tableaus: Gauss–Legendre generation and A-stability analysis.
//!
//! A tableau is immutable once built. [`gauss_legendre`] produces the
//! collocation methods at the shifted Legendre roots; custom tableaus can be
//! read from JSON with keys `s`, `a`, `b`, `c`, `p`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest stage count supported by [`gauss_legendre`].
pub const MAX_GAUSS_STAGES: usize = 8;

const ROW_SUM_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;
const EIGEN_TOL: f64 = 1e-10;
const RK1_TOL: f64 = 1e-12;
const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableauDocument {
    s: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    p: usize,
}

/// Coefficients `(a, b, c)` of an `s`-stage Runge–Kutta method together with
/// its classical order `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    s: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    p: usize,
    label: String,
}

impl ButcherTableau {
    /// Builds a tableau from its coefficients, checking dimensions and the
    /// row-sum and weight-sum consistency conditions.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>, p: usize) -> Result<Self> {
        Self::with_label(a, b, c, p, "custom")
    }

    fn with_label(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        p: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::invalid("tableau must have at least one stage"));
        }
        if p == 0 {
            return Err(Error::invalid("classical order must be positive"));
        }
        if c.len() != s || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::invalid(format!(
                "inconsistent tableau dimensions: b has {s} entries, c has {}, a has {} rows",
                c.len(),
                a.len()
            )));
        }
        let flat: Vec<f64> = a.iter().flatten().copied().collect();
        if flat.iter().chain(&b).chain(&c).any(|x| !x.is_finite()) {
            return Err(Error::invalid("tableau coefficients must be finite"));
        }
        for (i, row) in a.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - c[i]).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "row {i} of a sums to {sum}, expected c[{i}] = {}",
                    c[i]
                )));
            }
        }
        let bsum: f64 = b.iter().sum();
        if (bsum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {bsum}, expected 1")));
        }
        Ok(Self {
            s,
            a: flat,
            b,
            c,
            p,
            label: label.into(),
        })
    }

    /// Parses the JSON document form `{"s":..,"a":[[..]],"b":[..],"c":[..],"p":..}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: TableauDocument = serde_json::from_str(text)?;
        if doc.s != doc.b.len() {
            return Err(Error::invalid(format!(
                "declared s = {} but b has {} entries",
                doc.s,
                doc.b.len()
            )));
        }
        Self::new(doc.a, doc.b, doc.c, doc.p)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut t = Self::from_json_str(&text)?;
        t.label = path.display().to_string();
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        let doc = TableauDocument {
            s: self.s,
            a: self.a_rows(),
            b: self.b.clone(),
            c: self.c.clone(),
            p: self.p,
        };
        serde_json::to_string(&doc).expect("tableau serializes")
    }

    /// Resolves a descriptor: `gl:<s>` for Gauss–Legendre, anything else is
    /// read as a path to a JSON tableau.
    pub fn resolve(descriptor: &str) -> Result<Self> {
        match descriptor.strip_prefix("gl:") {
            Some(s) => {
                let s: usize = s.trim().parse().map_err(|_| {
                    Error::invalid(format!("bad Gauss-Legendre descriptor `{descriptor}`"))
                })?;
                gauss_legendre(s)
            }
            None => Self::from_json_file(descriptor),
        }
    }

    pub fn implicit_midpoint() -> Self {
        gauss_legendre(1).expect("s = 1 is valid")
    }

    pub fn implicit_euler() -> Self {
        Self::with_label(vec![vec![1.0]], vec![1.0], vec![1.0], 1, "implicit-euler")
            .expect("valid tableau")
    }

    pub fn explicit_euler() -> Self {
        Self::with_label(vec![vec![0.0]], vec![1.0], vec![0.0], 1, "explicit-euler")
            .expect("valid tableau")
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn order(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.s).map(<[f64]>::to_vec).collect()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Short human-readable descriptor (`gl:2`, `custom`, a file path, ...).
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Hash of the coefficient bit patterns; equal tableaus share a fingerprint.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.s.hash(&mut hasher);
        for x in self.a.iter().chain(&self.b).chain(&self.c) {
            x.to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }

    fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.s, self.s, &self.a)
    }
}

/// Working resolution of the exact-arithmetic construction: values are
/// kept as multiples of `2^−FIXED_BITS`.
const FIXED_BITS: usize = 160;

fn fixed(x: &BigRational) -> BigRational {
    let scale = BigInt::one() << FIXED_BITS;
    BigRational::new((x * &scale).round().to_integer(), scale)
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Legendre polynomial `P_n(x)` on `[-1, 1]` and its derivative.
fn legendre(n: usize, x: &BigRational) -> (BigRational, BigRational) {
    let one = BigRational::one();
    if n == 0 {
        return (one, BigRational::zero());
    }
    let (mut p0, mut p1) = (one.clone(), x.clone());
    for k in 2..=n {
        let int = |v: usize| BigRational::from_integer(BigInt::from(v));
        let p2 = fixed(&((int(2 * k - 1) * x * &p1 - int(k - 1) * &p0) / int(k)));
        p0 = p1;
        p1 = p2;
    }
    let dp = fixed(&((x * &p1 - p0) * BigRational::from_integer(BigInt::from(n)) / (x * x - one)));
    (p1, dp)
}

/// Roots of `P_s`, ascending and exactly symmetric about zero.
fn legendre_roots(s: usize) -> Vec<BigRational> {
    let tol = BigRational::new(BigInt::one(), BigInt::one() << (FIXED_BITS - 8));
    let mut roots = vec![BigRational::zero(); s];
    for i in 0..s / 2 {
        let mut x = exact(((2 * i + 1) as f64 * std::f64::consts::PI / (2 * s) as f64).cos());
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, dp) = legendre(s, &x);
            let dx = fixed(&(p / dp));
            x -= &dx;
            if dx.abs() <= tol {
                break;
            }
        }
        roots[i] = -x.clone();
        roots[s - 1 - i] = x;
    }
    roots
}

/// Lagrange basis polynomial `l_j` of `nodes`, in product form.
fn lagrange(nodes: &[BigRational], j: usize, x: &BigRational) -> BigRational {
    nodes
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .fold(BigRational::one(), |acc, (_, xm)| fixed(&(acc * (x - xm) / (&nodes[j] - xm))))
}

fn build_gauss_legendre(s: usize) -> ButcherTableau {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let roots = legendre_roots(s);
    let c: Vec<BigRational> = roots.iter().map(|x| (x + BigRational::one()) * &half).collect();
    let b: Vec<BigRational> = roots
        .iter()
        .map(|x| {
            let (_, dp) = legendre(s, x);
            fixed(&(BigRational::one() / ((BigRational::one() - x * x) * &dp * &dp)))
        })
        .collect();
    let a: Vec<Vec<f64>> = c
        .iter()
        .map(|ci| {
            (0..s)
                .map(|j| {
                    let sum = c
                        .iter()
                        .zip(&b)
                        .fold(BigRational::zero(), |acc, (cm, bm)| acc + bm * lagrange(&c, j, &fixed(&(ci * cm))));
                    (ci * sum).to_f64().expect("finite")
                })
                .collect()
        })
        .collect();
    let round = |v: &[BigRational]| v.iter().map(|x| x.to_f64().expect("finite")).collect::<Vec<_>>();
    ButcherTableau::with_label(a, round(&b), round(&c), 2 * s, format!("gl:{s}"))
        .expect("Gauss-Legendre data are consistent")
}

static GAUSS_LEGENDRE: [OnceLock<ButcherTableau>; MAX_GAUSS_STAGES] = [const { OnceLock::new() }; MAX_GAUSS_STAGES];

/// The `s`-stage Gauss–Legendre collocation method, of classical order `2s`.
///
/// `a_ij = ∫_0^{c_i} l_j` is evaluated with the method's own `s`-point
/// quadrature mapped to `[0, c_i]`, exact for the degree `s − 1` integrand.
/// The construction runs in exact rational arithmetic at a 160-bit
/// resolution and rounds once, so every coefficient is correctly rounded.
pub fn gauss_legendre(s: usize) -> Result<ButcherTableau> {
    if !(1..=MAX_GAUSS_STAGES).contains(&s) {
        return Err(Error::invalid(format!(
            "Gauss-Legendre stage count must be in 1..={MAX_GAUSS_STAGES}, got {s}"
        )));
    }
    Ok(GAUSS_LEGENDRE[s - 1].get_or_init(|| build_gauss_legendre(s)).clone())
}

/// `S(z) = 1 + z bᵀ (I − z a)⁻¹ 𝟙`.
pub fn stability_function(t: &ButcherTableau, z: Complex64) -> Result<Complex64> {
    let s = t.stages();
    let m = DMatrix::from_fn(s, s, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        Complex64::new(delta, 0.0) - z * t.a(i, j)
    });
    let x = m
        .lu()
        .solve(&DVector::from_element(s, Complex64::new(1.0, 0.0)))
        .ok_or(Error::SingularResolvent { z })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularResolvent { z });
    }
    let btx: Complex64 = t.b().iter().zip(x.iter()).map(|(&b, &xi)| xi * b).sum();
    Ok(Complex64::new(1.0, 0.0) + z * btx)
}

const REFLECTION_TOL: f64 = 1e-13;

/// `S(z) = P(z)/Q(z)` with `Q(z) = det(I − z a)` and
/// `P(z) = det(I − z(a − 𝟙bᵀ))`, coefficients in ascending powers.
///
/// Evaluating the two polynomials keeps `|S(iy)| = 1` for symmetric
/// methods to within a few units of round-off, independent of `|y|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRational {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    /// Whether the numerator was recognized as the reflected denominator.
    pub symmetric: bool,
}

impl StabilityRational {
    pub fn new(t: &ButcherTableau) -> Self {
        let rational = |x: f64| BigRational::from_float(x).expect("tableau entries are finite");
        let a: Vec<Vec<BigRational>> = t.a_rows().iter().map(|row| row.iter().map(|&x| rational(x)).collect()).collect();
        let b: Vec<BigRational> = t.b().iter().map(|&x| rational(x)).collect();
        let shifted: Vec<Vec<BigRational>> = a
            .iter()
            .map(|row| row.iter().zip(&b).map(|(x, bj)| x - bj).collect())
            .collect();
        let numerator = det_polynomial(&shifted);
        let denominator = det_polynomial(&a);
        // Symmetric methods have N(z) = D(−z). Rounding the tableau to f64
        // perturbs that by a few ulp per coefficient, which would show up
        // as |S(iy)| ≠ 1; within that margin the reflection is restored.
        let reflected: Vec<f64> = denominator
            .iter()
            .enumerate()
            .map(|(j, &d)| if j % 2 == 0 { d } else { -d })
            .collect();
        let symmetric = numerator
            .iter()
            .zip(&reflected)
            .all(|(&n, &r)| (n - r).abs() <= REFLECTION_TOL * n.abs().max(r.abs()));
        Self {
            numerator: if symmetric { reflected } else { numerator },
            denominator,
            symmetric,
        }
    }

    fn horner(c: &[f64], z: Complex64) -> Complex64 {
        c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let q = Self::horner(&self.denominator, z);
        if q.norm() == 0.0 || !q.is_finite() {
            return Err(Error::SingularResolvent { z });
        }
        Ok(Self::horner(&self.numerator, z) / q)
    }

    /// `|S(z)|` as `|N(z)| / |D(z)|`, skipping the complex division. For
    /// Gauss–Legendre `N(z) = D(−z)` holds coefficientwise, so on the
    /// imaginary axis both moduli come out bit-identical.
    pub fn modulus(&self, z: Complex64) -> Result<f64> {
        let q = Self::horner(&self.denominator, z).norm();
        if q == 0.0 || !q.is_finite() {
            return Err(Error::SingularResolvent { z });
        }
        Ok(Self::horner(&self.numerator, z).norm() / q)
    }
}

/// Coefficients of `det(I − z M) = Σ_j (−z)^j E_j(M)`, `E_j` being the sum
/// of the `j × j` principal minors, evaluated exactly; the only rounding is
/// the final conversion of each coefficient. Every `f64` is a dyadic
/// rational, so tableau entries enter without error.
fn det_polynomial(m: &[Vec<BigRational>]) -> Vec<f64> {
    let s = m.len();
    let mut coeffs = vec![BigRational::zero(); s + 1];
    for mask in 0usize..(1 << s) {
        let idx: Vec<usize> = (0..s).filter(|i| mask & (1 << i) != 0).collect();
        let minor = exact_det(idx.iter().map(|&r| idx.iter().map(|&c| m[r][c].clone()).collect()).collect());
        let j = idx.len();
        if j.is_multiple_of(2) {
            coeffs[j] += minor;
        } else {
            coeffs[j] -= minor;
        }
    }
    coeffs.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
}

/// Determinant by Gaussian elimination in exact arithmetic.
fn exact_det(mut m: Vec<Vec<BigRational>>) -> BigRational {
    let n = m.len();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col].clone();
        det *= &p;
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &p;
            let (top, bottom) = m.split_at_mut(r);
            for (x, pivot_entry) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= &factor * pivot_entry;
            }
        }
    }
    det
}

/// Sampled A-stability diagnostics for a tableau.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rk1_ok: bool,
    /// Sample point with the largest `|S(z)|` and that value (infinite when
    /// `I − z a` was singular there).
    pub rk1_worst: (Complex64, f64),
    pub rk2_ok: bool,
    pub a_eigenvalues: Vec<Complex64>,
    pub a_invertible: bool,
    pub samples: usize,
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (l0, l1) = (lo.log10(), hi.log10());
    (0..n).map(move |i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1).max(1) as f64))
}

/// Samples `|S(z)|` on the imaginary axis (`|y| ∈ [1e−3, 1e6]`, both signs)
/// and on a polar grid inside the open left half-plane, and checks the
/// eigenvalues of `a` against `{Re z ≤ 0} \ {0}`.
///
/// Sampling cannot certify boundedness on all of `ℂ⁻`; a pass here means no
/// violation was found at the sampled points.
pub fn check_a_stability(
    t: &ButcherTableau,
    boundary_samples: usize,
    interior_samples: usize,
) -> Result<StabilityReport> {
    if boundary_samples < 16 || interior_samples < 16 {
        return Err(Error::invalid("stability sample counts must be at least 16"));
    }
    let mut points = Vec::with_capacity(2 * boundary_samples + interior_samples * interior_samples);
    for y in log_space(1e-3, 1e6, boundary_samples) {
        points.push(Complex64::new(0.0, y));
        points.push(Complex64::new(0.0, -y));
    }
    let radii: Vec<f64> = log_space(1e-3, 1e6, interior_samples).collect();
    for m in 1..=interior_samples {
        // open interval (π/2, 3π/2)
        let theta = std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * m as f64 / (interior_samples + 1) as f64;
        for &r in &radii {
            points.push(Complex64::from_polar(r, theta));
        }
    }

    let mut worst = (Complex64::new(0.0, 0.0), 0.0_f64);
    for &z in &points {
        let modulus = match stability_function(t, z) {
            Ok(v) => v.norm(),
            Err(_) => f64::INFINITY,
        };
        if modulus > worst.1 || modulus.is_nan() {
            worst = (z, if modulus.is_nan() { f64::INFINITY } else { modulus });
        }
    }

    let eigenvalues: Vec<Complex64> = t.a_matrix().complex_eigenvalues().iter().copied().collect();
    let rk2_ok = eigenvalues
        .iter()
        .all(|ev| ev.norm() <= EIGEN_TOL || ev.re > EIGEN_TOL);
    let a_invertible = eigenvalues.iter().all(|ev| ev.norm() > EIGEN_TOL);

    Ok(StabilityReport {
        rk1_ok: worst.1 <= 1.0 + RK1_TOL,
        rk1_worst: worst,
        rk2_ok,
        a_eigenvalues: eigenvalues,
        a_invertible,
        samples: points.len(),
    })
}

/// Largest `k` such that `Σ bᵢ cᵢ^{j−1} = 1/j` for all `j ≤ k`.
pub fn quadrature_order(t: &ButcherTableau) -> usize {
    let max_k = 2 * t.stages() + 1;
    (1..=max_k)
        .take_while(|&j| {
            let sum: f64 = t
                .b()
                .iter()
                .zip(t.c())
                .map(|(&b, &c)| b * c.powi(j as i32 - 1))
                .sum();
            (sum - 1.0 / j as f64).abs() <= QUADRATURE_TOL
        })
        .last()
        .unwrap_or(0)
}
