//! Numerical laboratory for nonlocal obstacle problems.
//!
//! Generates random obstacle configurations from marked point processes at
//! the critical scale, computes fractional capacities and capacitary
//! potentials, solves pinned and effective Dirichlet problems, and estimates
//! the ergodic limits that tie them together.

pub mod capacity;
pub mod energy;
mod fft;
pub mod ergodic;
pub mod grid;
pub mod homogenize;
pub mod obstacle;
pub mod params;
pub mod point_process;
pub mod report;
pub mod seed;
pub mod solver;

pub use energy::{KernelSpec, KernelTable, KernelVariant};
pub use grid::{GridDomain, GridField, NodeClass};
pub use params::ScalingParams;
pub use point_process::{
    analytic_mark_moment, matern_thin, sample_poisson, sample_shifted_lattice, sample_thinned,
    MarkDistribution, MarkedConfiguration, Moment, ProcessSpec, Window,
};
pub use solver::{Method, SolveOutcome, SolverTolerances};
