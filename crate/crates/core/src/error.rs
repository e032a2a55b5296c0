use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
///
/// Solver infeasibility is deliberately not an error: it is reported through
/// [`SolveStatus`](crate::solvers::SolveStatus) so closed-loop runs can keep
/// going and log the violation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value while differentiating along coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("integration diverged at stage {stage}")]
    Divergence { stage: usize },
    #[error("non-finite Jacobian entry at ({row}, {col}) during linearization")]
    Linearization { row: usize, col: usize },
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error(
        "constraint {index} is not concave (quadratic term has eigenvalue {eigenvalue:e}); \
         use the rk_nonlinear backend instead"
    )]
    NonConvex { index: usize, eigenvalue: f64 },
    #[error("invalid {field}: {reason}")]
    InvalidParameter {
        field: &'static str,
        reason: &'static str,
    },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("terrain gradient is not finite at ({x}, {y})")]
    Terrain { x: f64, y: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
