//! Bundled plants, constraints and nominal controllers for the two reference
//! experiments.

pub mod double_integrator;
pub mod rollover;
