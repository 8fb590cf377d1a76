//! Mirror-descent method of successive approximations for deterministic
//! optimal control on a finite horizon.
//!
//! Each iteration integrates the state forward, the adjoint backward, and
//! replaces the control node-wise by the maximizer of a Bregman-regularized
//! linearization of the Hamiltonian. The [`reference`] module provides
//! closed-form oracles and the inequality checks used to validate runs.

pub mod error;
pub mod mirror;
pub mod problem;
pub mod problems;
pub mod reference;
pub mod sampling;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
pub use mirror::{bregman_integrated, bregman_pointwise, mirror_step_pointwise, MirrorMap};
pub use problem::{ControlSet, ProblemSpec, SmoothnessData};
pub use solver::{run, IterateRecord, SolveReport, SolverConfig, Termination};
pub use trajectory::{evaluate_cost, integrate_adjoint, integrate_state, TimeGrid, Trajectory};
