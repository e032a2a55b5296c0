//! `ṗ = v, v̇ = u` with position limits of relative degree two.

use alloc::vec;

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::constraint::Constraint;
use crate::error::Result;
use crate::params::InputBox;
use crate::system::{ControlAffine, Input, State};

/// State `(p, v)`, scalar acceleration input.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegrator;

impl DoubleIntegrator {
    /// `U = [-10, 10]`.
    pub fn default_box() -> Result<InputBox> {
        InputBox::uniform(1, -10.0, 10.0)
    }
}

impl ControlAffine for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &State) -> State {
        DVector::from_vec(alloc::vec![x[1], 0.0])
    }

    fn input_matrix(&self, _x: &State) -> DMatrix<f64> {
        dmatrix![0.0; 1.0]
    }

    fn drift_jacobian(&self, _x: &State) -> Option<DMatrix<f64>> {
        Some(dmatrix![0.0, 1.0; 0.0, 0.0])
    }
}

/// `h₁(x) = limit - p`.
#[derive(Debug, Clone, Copy)]
pub struct PositionLimit {
    pub limit: f64,
}

impl PositionLimit {
    pub fn new(limit: f64) -> Self {
        Self { limit }
    }
}

impl Constraint for PositionLimit {
    fn value(&self, x: &State, _u: &Input) -> f64 {
        self.limit - x[0]
    }

    fn grad_x(&self, _x: &State, _u: &Input) -> Option<DVector<f64>> {
        Some(DVector::from_vec(alloc::vec![-1.0, 0.0]))
    }

    fn grad_u(&self, _x: &State, u: &Input) -> Option<DVector<f64>> {
        Some(DVector::zeros(u.len()))
    }

    fn hessian(&self, x: &State, u: &Input) -> Option<DMatrix<f64>> {
        let k = x.len() + u.len();
        Some(DMatrix::zeros(k, k))
    }

    fn name(&self) -> &str {
        "h1"
    }
}

/// `h₂(x) = bound - p²`, concave.
#[derive(Debug, Clone, Copy)]
pub struct PositionSquared {
    pub bound: f64,
}

impl PositionSquared {
    pub fn new(bound: f64) -> Self {
        Self { bound }
    }
}

impl Constraint for PositionSquared {
    fn value(&self, x: &State, _u: &Input) -> f64 {
        self.bound - x[0] * x[0]
    }

    fn grad_x(&self, x: &State, _u: &Input) -> Option<DVector<f64>> {
        Some(DVector::from_vec(alloc::vec![-2.0 * x[0], 0.0]))
    }

    fn grad_u(&self, _x: &State, u: &Input) -> Option<DVector<f64>> {
        Some(DVector::zeros(u.len()))
    }

    fn hessian(&self, x: &State, u: &Input) -> Option<DMatrix<f64>> {
        let k = x.len() + u.len();
        let mut m = DMatrix::zeros(k, k);
        m[(0, 0)] = -2.0;
        Some(m)
    }

    fn name(&self) -> &str {
        "h2"
    }
}
