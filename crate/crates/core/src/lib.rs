//! Doubly-adaptive artificial-compression integration for incompressible flow.
//!
//! The incompressibility constraint is relaxed to `eps p_t + div u = 0`,
//! which uncouples the velocity solve from the pressure update; the time
//! step `k` and the compression parameter `eps` are then adapted
//! independently, `k` against local momentum error estimators and `eps`
//! against the divergence norm. The discrete operators are arranged so the
//! scheme's energy balance closes to machine precision, and the [`energy`]
//! module re-derives that balance from recorded trajectories as an audit.

pub mod controllers;
pub mod energy;
pub mod grid;
pub mod linsolve;
pub mod ode;
pub mod stepper;

pub use controllers::{
    alpha1, alpha2, est1, est2, propose_epsilon, propose_step, reject_epsilon, reject_step,
    reject_step_k, second_difference, EstimatorBundle, OrderMode, StepWindow, Tolerances,
};
pub use energy::{
    energy_audit_first_order, energy_audit_second_order, numerical_dissipation, DissipationSample,
    EnergyBudget, StepBudget,
};
pub use grid::{
    advect_skew, divergence, grad_div, grad_norm_sq, gradient, laplacian, CellField, FaceField,
    MacGrid,
};
pub use linsolve::{
    assemble_momentum, dof_count, field_from_dofs, interior_dofs, solve, solve_dense,
    Preconditioner, SolveConfig, SolveError, SolveMethod, SolveStats, SparseOperator,
};
pub use ode::{be_step, filter_step, run_adaptive, run_fixed, OdeError, OdeRun, OdeStepRecord};
pub use stepper::{
    continuity_residual, epsilon_hat, extrapolate, momentum_solve, pressure_update,
    run_prescribed, step, ContinuityVariant, FlowState, PressureVelocity, SchemeConfig, StepError,
    StepReport, Trajectory,
};
