//! Parameters of the zero-order barrier condition and the admissible input set.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::system::Input;

/// Family tag for [`ClassKappa`]. Only the linear family is currently used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaKind {
    Linear,
}

/// Extended class-K function with `|γ(s)| <= |s|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassKappa {
    kind: KappaKind,
    gamma_c: f64,
}

impl ClassKappa {
    /// `γ(s) = gamma_c * s` with `gamma_c` in `(0, 1]`.
    pub fn linear(gamma_c: f64) -> Result<Self> {
        if !(gamma_c > 0.0 && gamma_c <= 1.0) {
            return Err(Error::InvalidParameter {
                field: "gamma_c",
                reason: "must lie in (0, 1]",
            });
        }
        Ok(Self {
            kind: KappaKind::Linear,
            gamma_c,
        })
    }

    pub fn kind(&self) -> KappaKind {
        self.kind
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.kind {
            KappaKind::Linear => self.gamma_c * s,
        }
    }
}

/// Free-function form of [`ClassKappa::eval`].
pub fn gamma_eval(gamma: &ClassKappa, s: f64) -> f64 {
    gamma.eval(s)
}

/// How the second-order term of the quadratic Taylor model is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Curvature {
    /// `Δᵀ J Δ` with `J` the Hessian of `h`, no one-half factor.
    #[default]
    FullHessian,
    /// The textbook second-order Taylor term `½ Δᵀ J Δ`.
    HalfHessian,
}

impl Curvature {
    pub fn weight(self) -> f64 {
        match self {
            Curvature::FullHessian => 1.0,
            Curvature::HalfHessian => 0.5,
        }
    }
}

/// Parameters of the ZOCBF inequality
/// `h(φ(T; x, u), u) >= (Id - γ)(h(x, u_prev)) + δ + mismatch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZocbfParams {
    /// Sampling period `T` in seconds.
    pub period: f64,
    /// Robustness buffer `δ` covering inter-sample behaviour.
    pub delta: f64,
    pub gamma: ClassKappa,
    /// Constant bound on the gap between predicted and true constraint value.
    pub mismatch: f64,
    pub curvature: Curvature,
}

impl ZocbfParams {
    pub fn new(period: f64, delta: f64, gamma: ClassKappa) -> Result<Self> {
        let params = Self {
            period,
            delta,
            gamma,
            mismatch: 0.0,
            curvature: Curvature::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_mismatch(mut self, mismatch: f64) -> Result<Self> {
        self.mismatch = mismatch;
        self.validate()?;
        Ok(self)
    }

    pub fn with_curvature(mut self, curvature: Curvature) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "period",
                reason: "must be finite and > 0",
            });
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "delta",
                reason: "must be finite and >= 0",
            });
        }
        if !(self.mismatch >= 0.0 && self.mismatch.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "mismatch",
                reason: "must be finite and >= 0",
            });
        }
        ClassKappa::linear(self.gamma.gamma_c()).map(|_| ())
    }

    /// Right-hand side `(Id - γ)(h_prev) + δ + mismatch` of the condition.
    pub fn threshold(&self, h_prev: f64) -> f64 {
        h_prev - self.gamma.eval(h_prev) + self.delta + self.mismatch
    }
}

/// Componentwise box `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: Input,
    upper: Input,
}

impl InputBox {
    pub fn new(lower: Input, upper: Input) -> Result<Self> {
        check_dim("input box upper bound", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter {
                field: "input box",
                reason: "must have at least one dimension",
            });
        }
        for (lo, hi) in lower.iter().zip(upper.iter()) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter {
                    field: "input box",
                    reason: "bounds must be finite",
                });
            }
            if lo > hi {
                return Err(Error::InvalidParameter {
                    field: "input box",
                    reason: "lower bound exceeds upper bound",
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// Same interval `[lo, hi]` in every one of `dim` coordinates.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Input {
        &self.lower
    }

    pub fn upper(&self) -> &Input {
        &self.upper
    }

    pub fn project(&self, u: &Input) -> Input {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }

    pub fn contains(&self, u: &Input) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(self.lower.iter())
            .map(|(hi, lo)| hi - lo)
            .collect()
    }

    /// Intersection with `[center - radius, center + radius]`, never empty
    /// when `center` lies in the box.
    pub(crate) fn shrink_around(&self, center: &Input, radius: f64) -> InputBox {
        let lower = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.lower[i].max(center[i] - radius).min(self.upper[i])),
        );
        let upper = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.upper[i].min(center[i] + radius).max(lower[i])),
        );
        InputBox { lower, upper }
    }
}
