//! Flow maps `φ(t; x, u)` under a held input.

use alloc::vec;
use alloc::vec::Vec;

use crate::constraint::Constraint;
use crate::error::{Error, Result};
use crate::system::{ControlAffine, Input, State};

/// Substeps per sampling period used for ground-truth propagation.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Explicit Runge–Kutta scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    order: u8,
    /// Stage weights, summing to one.
    weights: Vec<f64>,
    /// Strictly lower-triangular stage coefficients; row `i` has `i` entries.
    coeffs: Vec<Vec<f64>>,
}

impl ButcherTableau {
    pub fn euler() -> Self {
        Self {
            order: 1,
            weights: vec![1.0],
            coeffs: vec![vec![]],
        }
    }

    /// Explicit midpoint rule.
    pub fn midpoint() -> Self {
        Self {
            order: 2,
            weights: vec![0.0, 1.0],
            coeffs: vec![vec![], vec![0.5]],
        }
    }

    /// The classic fourth-order method.
    pub fn rk4() -> Self {
        Self {
            order: 4,
            weights: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            coeffs: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
        }
    }

    pub fn with_order(order: u8) -> Result<Self> {
        match order {
            1 => Ok(Self::euler()),
            2 => Ok(Self::midpoint()),
            4 => Ok(Self::rk4()),
            _ => Err(Error::InvalidParameter {
                field: "order",
                reason: "supported Runge-Kutta orders are 1, 2 and 4",
            }),
        }
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn stages(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }
}

fn all_finite(v: &State) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// One explicit Runge–Kutta step of length `period` with `u` held constant.
pub fn flow_step<S: ControlAffine + ?Sized>(
    sys: &S,
    x: &State,
    u: &Input,
    period: f64,
    tab: &ButcherTableau,
) -> Result<State> {
    let mut slopes: Vec<State> = Vec::with_capacity(tab.stages());
    for (i, row) in tab.coeffs.iter().enumerate() {
        let mut stage = x.clone();
        for (lambda, k) in row.iter().zip(&slopes) {
            if *lambda != 0.0 {
                stage.axpy(period * lambda, k, 1.0);
            }
        }
        if !all_finite(&stage) {
            return Err(Error::Divergence { stage: i });
        }
        let k = sys.vector_field(&stage, u);
        if !all_finite(&k) {
            return Err(Error::Divergence { stage: i });
        }
        slopes.push(k);
    }
    let mut next = x.clone();
    for (w, k) in tab.weights.iter().zip(&slopes) {
        if *w != 0.0 {
            next.axpy(period * w, k, 1.0);
        }
    }
    if !all_finite(&next) {
        return Err(Error::Divergence {
            stage: tab.stages(),
        });
    }
    Ok(next)
}

/// States at `t = j * period / substeps` for `j = 0..=substeps`, each
/// substep an RK4 step.
pub fn flow_reference_trajectory<S: ControlAffine + ?Sized>(
    sys: &S,
    x: &State,
    u: &Input,
    period: f64,
    substeps: usize,
) -> Result<Vec<State>> {
    if substeps == 0 {
        return Err(Error::InvalidParameter {
            field: "substeps",
            reason: "must be >= 1",
        });
    }
    let rk4 = ButcherTableau::rk4();
    let dt = period / substeps as f64;
    let mut states = Vec::with_capacity(substeps + 1);
    states.push(x.clone());
    for _ in 0..substeps {
        let next = flow_step(sys, states.last().unwrap(), u, dt, &rk4)?;
        states.push(next);
    }
    Ok(states)
}

/// High-accuracy flow: `substeps` RK4 steps of length `period / substeps`.
pub fn flow_reference<S: ControlAffine + ?Sized>(
    sys: &S,
    x: &State,
    u: &Input,
    period: f64,
    substeps: usize,
) -> Result<State> {
    Ok(flow_reference_trajectory(sys, x, u, period, substeps)?
        .pop()
        .unwrap())
}

/// Minimum of `h(φ(t; x, u), u)` over `t ∈ {0, T/N, ..., T}` and the time
/// at which it occurs (earliest on ties).
pub fn min_h_intersample<S, H>(
    sys: &S,
    h: &H,
    x: &State,
    u: &Input,
    period: f64,
    grid: usize,
) -> Result<(f64, f64)>
where
    S: ControlAffine + ?Sized,
    H: Constraint + ?Sized,
{
    if grid < 2 {
        return Err(Error::InvalidParameter {
            field: "grid",
            reason: "must be >= 2",
        });
    }
    let states = flow_reference_trajectory(sys, x, u, period, grid)?;
    let mut best = (f64::INFINITY, 0.0);
    for (j, s) in states.iter().enumerate() {
        let v = h.value(s, u);
        if v < best.0 {
            best = (v, period * j as f64 / grid as f64);
        }
    }
    Ok(best)
}
