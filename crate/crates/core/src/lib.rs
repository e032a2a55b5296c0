//! Safety filters for sampled-data control-affine systems based on
//! zero-order control barrier functions.
//!
//! A filter keeps the input `u` held over the next period admissible for
//!
//! ```text
//! h(φ(T; x_k, u), u) - h(x_k, u_prev) >= -γ(h(x_k, u_prev)) + δ
//! ```
//!
//! where `φ` is the plant flow under a zero-order hold. The condition is
//! enforced through a linearized model (linear or concave-quadratic
//! constraints), a single Runge–Kutta step solved by SQP, or a grid search
//! over the reference flow.
//!
//! The crate is `no_std` with `alloc` when built without the default `std`
//! feature; `std` adds wall-clock timing and parallel grid evaluation.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod condition;
pub mod constraint;
pub mod diff;
pub mod error;
pub mod integrators;
pub mod linearization;
pub mod models;
pub mod params;
pub mod simulation;
pub mod solvers;
pub mod system;

pub use condition::{
    conventional_cbf_margin, delta_lower_bound, exact_margin, input_sensitivity, linear_constraint,
    quadratic_constraint, taylor1_h, taylor2_h, Flow, LinearConstraint, QuadraticConstraint,
    TaylorModel,
};
pub use constraint::{Constraint, ConstraintFunction};
pub use error::{Error, Result};
pub use integrators::{
    flow_reference, flow_reference_trajectory, flow_step, min_h_intersample, ButcherTableau,
};
pub use linearization::{
    affine_model, discretize, expm, predict_state_linear, AffineModel, DiscreteModel,
};
pub use params::{gamma_eval, ClassKappa, Curvature, InputBox, ZocbfParams};
pub use simulation::{
    safety_report, simulate, ConstantPolicy, NominalPolicy, SafetyReport, SimulationError,
    SimulationLog, SimulationSetup,
};
pub use solvers::{
    project_box, safety_filter_step, solve_qcqp_box, solve_qp_halfspace_box, solve_sampling,
    solve_sqp_box, FilterBackend, FilterOptions, FilterResult, SolveStatus, SolverStats,
    SqpOptions,
};
pub use system::{ControlAffine, ControlAffineSystem, Input, State};
