//! Control-affine dynamics `ẋ = f(x) + g(x) u`.

use alloc::boxed::Box;

use nalgebra::{DMatrix, DVector};

use crate::diff::finite_diff_jacobian;
use crate::error::Result;

pub type State = DVector<f64>;
pub type Input = DVector<f64>;

/// A control-affine plant. Implementations must be pure so that candidate
/// inputs can be evaluated concurrently.
pub trait ControlAffine: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Drift `f(x)`.
    fn drift(&self, x: &State) -> State;
    /// Input matrix `g(x)`, `n × m`.
    fn input_matrix(&self, x: &State) -> DMatrix<f64>;

    /// Analytic `∂f/∂x`, if the model has one.
    fn drift_jacobian(&self, _x: &State) -> Option<DMatrix<f64>> {
        None
    }

    fn vector_field(&self, x: &State, u: &Input) -> State {
        self.drift(x) + self.input_matrix(x) * u
    }

    /// Canonical representative of a state (for example an angle wrapped to
    /// `[0, 2π)`). Applied by the simulator at sampling instants only.
    fn normalize(&self, x: State) -> State {
        x
    }
}

/// `∂f/∂x` at `x`, analytic when available and central differences otherwise.
pub fn drift_jacobian<S: ControlAffine + ?Sized>(sys: &S, x: &State) -> Result<DMatrix<f64>> {
    match sys.drift_jacobian(x) {
        Some(j) => Ok(j),
        None => finite_diff_jacobian(|p| sys.drift(p), x),
    }
}

type VectorMap = Box<dyn Fn(&State) -> State + Send + Sync>;
type MatrixMap = Box<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

/// A [`ControlAffine`] system assembled from closures.
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    f: VectorMap,
    g: MatrixMap,
    df_dx: Option<MatrixMap>,
}

impl ControlAffineSystem {
    pub fn new<F, G>(n: usize, m: usize, f: F, g: G) -> Self
    where
        F: Fn(&State) -> State + Send + Sync + 'static,
        G: Fn(&State) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            f: Box::new(f),
            g: Box::new(g),
            df_dx: None,
        }
    }

    pub fn with_jacobian<J>(mut self, df_dx: J) -> Self
    where
        J: Fn(&State) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.df_dx = Some(Box::new(df_dx));
        self
    }
}

impl ControlAffine for ControlAffineSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, x: &State) -> State {
        (self.f)(x)
    }

    fn input_matrix(&self, x: &State) -> DMatrix<f64> {
        (self.g)(x)
    }

    fn drift_jacobian(&self, x: &State) -> Option<DMatrix<f64>> {
        self.df_dx.as_ref().map(|j| j(x))
    }
}
