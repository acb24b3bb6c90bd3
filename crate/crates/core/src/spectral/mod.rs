//! Spectral realization of the linear operator `A`: grids and transforms,
//! modal states with their scale norms, the exact propagator, and the
//! mode-by-mode stage resolvent and update map of an implicit Runge–Kutta
//! step.

mod grid;
mod io;
mod ops;
mod resolvent;
mod state;

pub use grid::{BoundaryCondition, SpectralGrid, Symbol, DEFAULT_K_MAX};
pub use io::{read_binary, read_csv, write_binary, write_csv};
pub use ops::{apply_a, apply_exp_ta, inverse_transform, transform};
pub(crate) use ops::{component_to_nodes, nodes_to_component};
pub use resolvent::{
    apply_s_ha, solve_stage_resolvent, solve_stage_resolvent_uncached, ResolventCache,
    StageResolvent,
};
pub use state::{StageSet, State};
