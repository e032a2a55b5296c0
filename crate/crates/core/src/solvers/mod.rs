//! Minimum-deviation input selection
//!
//! ```text
//! minimize ‖u - u_nom‖  subject to  every margin(u) >= 0,  u in the box
//! ```
//!
//! with one backend per way of approximating the zero-order barrier
//! condition.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::params::InputBox;
use crate::system::Input;

mod clock;
mod dual;
mod filter;
mod qp;
mod sampling;
mod sqp;

pub use filter::{safety_filter_step, FilterOptions};
pub use qp::{solve_qcqp_box, solve_qp_halfspace_box};
pub use sampling::{solve_sampling, MAX_SAMPLING_DIM};
pub use sqp::{solve_sqp_box, SqpOptions};

/// A margin as a function of the candidate input.
pub type MarginFn<'a> = dyn Fn(&Input) -> Result<f64> + Sync + 'a;

/// Tolerance below which a margin still counts as satisfied for the
/// convex backends.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// How the filter enforces the barrier condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBackend {
    /// Linear state prediction and first-order model of `h`: one halfspace
    /// per constraint.
    LinearizedLinear,
    /// Linear state prediction and second-order model of `h`: one concave
    /// quadratic constraint per constraint.
    LinearizedQuadratic,
    /// Single explicit Runge–Kutta step of the given order, solved by SQP.
    RkNonlinear { order: u8 },
    /// Exhaustive search over a uniform grid with `samples` points per input
    /// dimension, margins from the reference flow.
    Sampling { samples: usize },
    /// Apply the (box-clamped) nominal input unchanged.
    NoFilter,
}

impl FilterBackend {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterBackend::RkNonlinear { order } if !matches!(order, 1 | 2 | 4) => {
                Err(Error::InvalidParameter {
                    field: "backend order",
                    reason: "supported Runge-Kutta orders are 1, 2 and 4",
                })
            }
            FilterBackend::Sampling { samples } if samples < 3 => Err(Error::InvalidParameter {
                field: "backend samples",
                reason: "need at least 3 samples per dimension",
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for FilterBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterBackend::LinearizedLinear => f.write_str("linearized_linear"),
            FilterBackend::LinearizedQuadratic => f.write_str("linearized_quadratic"),
            FilterBackend::RkNonlinear { order } => write!(f, "rk_nonlinear:{order}"),
            FilterBackend::Sampling { samples } => write!(f, "sampling:{samples}"),
            FilterBackend::NoFilter => f.write_str("no_filter"),
        }
    }
}

impl FromStr for FilterBackend {
    type Err = Error;

    /// Parses `linearized_linear`, `linearized_quadratic`, `rk_nonlinear[:p]`
    /// (default order 4), `sampling[:S]` (default 401) and `no_filter`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = |reason| Error::InvalidParameter {
            field: "backend",
            reason,
        };
        let backend = match (name, arg) {
            ("linearized_linear", None) => FilterBackend::LinearizedLinear,
            ("linearized_quadratic", None) => FilterBackend::LinearizedQuadratic,
            ("no_filter", None) => FilterBackend::NoFilter,
            ("rk_nonlinear", a) => FilterBackend::RkNonlinear {
                order: a
                    .map_or(Ok(4), str::parse)
                    .map_err(|_| bad("order must be an integer"))?,
            },
            ("sampling", a) => FilterBackend::Sampling {
                samples: a
                    .map_or(Ok(401), str::parse)
                    .map_err(|_| bad("samples must be an integer"))?,
            },
            _ => return Err(bad("unknown backend name or unexpected argument")),
        };
        backend.validate()?;
        Ok(backend)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    /// No admissible input found; the reported input is the least violating.
    Infeasible,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        !matches!(self, SolveStatus::Infeasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleSuboptimal => "feasible_suboptimal",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub iterations: usize,
    /// Margin (or constraint) evaluations.
    pub evaluations: usize,
    /// Wall time in seconds; zero without the `std` feature.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub u: Input,
    /// Worst constraint margin at `u`, as modelled by the backend.
    pub margin: f64,
    /// `‖u - u_nom‖`.
    pub objective: f64,
    pub status: SolveStatus,
    pub stats: SolverStats,
}

/// Componentwise clamp of `u` into the box.
pub fn project_box(u: &Input, bx: &InputBox) -> Input {
    bx.project(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn project_examples() {
        let b = InputBox::uniform(1, -10.0, 10.0).unwrap();
        assert_eq!(project_box(&DVector::from_element(1, 15.0), &b)[0], 10.0);
        assert_eq!(project_box(&DVector::from_element(1, 3.0), &b)[0], 3.0);
        let b2 = InputBox::uniform(2, -10.0, 10.0).unwrap();
        let u = project_box(&DVector::from_vec(alloc::vec![-20.0, 5.0]), &b2);
        assert_eq!(u.as_slice(), &[-10.0, 5.0]);
    }

    #[test]
    fn backend_names_round_trip() {
        for b in [
            FilterBackend::LinearizedLinear,
            FilterBackend::LinearizedQuadratic,
            FilterBackend::RkNonlinear { order: 2 },
            FilterBackend::Sampling { samples: 51 },
            FilterBackend::NoFilter,
        ] {
            assert_eq!(
                alloc::string::ToString::to_string(&b)
                    .parse::<FilterBackend>()
                    .unwrap(),
                b
            );
        }
        assert_eq!(
            "rk_nonlinear".parse::<FilterBackend>().unwrap(),
            FilterBackend::RkNonlinear { order: 4 }
        );
        assert!("rk_nonlinear:3".parse::<FilterBackend>().is_err());
        assert!("sampling:2".parse::<FilterBackend>().is_err());
        assert!("qp".parse::<FilterBackend>().is_err());
    }
}
