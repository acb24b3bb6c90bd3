//! Implicit A-stable Runge–Kutta time stepping for semilinear evolution
//! equations `∂ₜU = AU + B(U)` discretized spectrally in space.
//!
//! The crate is organized bottom-up:
//!
//! - [`tableau`]: Butcher tableaus, Gauss–Legendre generation and
//!   A-stability diagnostics.
//! - [`spectral`]: grids, transforms, states, Sobolev-scale norms and the
//!   per-mode resolvent `(I − h a ⊗ A)⁻¹` and update map `S(hA)`.
//! - [`problems`]: pseudospectral nonlinearities for the semilinear wave
//!   and nonlinear Schrödinger equations.
//! - [`stepper`]: fixed-point stage solves, the step map, trajectories and
//!   the tangent (variational) step.
//! - [`harness`]: convergence, conservation, stability and smoothness
//!   experiments.

pub mod error;
pub mod harness;
pub mod problems;
pub mod spectral;
pub mod stepper;
pub mod tableau;

pub use error::{Error, Result};
pub use num_complex::Complex64;
