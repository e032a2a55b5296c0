//! Convex backends: halfspaces and concave quadratics intersected with the
//! input box.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::condition::{LinearConstraint, QuadraticConstraint};
use crate::error::{check_dim, Error, Result};
use crate::params::InputBox;
use crate::system::Input;

use super::clock::Stopwatch;
use super::dual::{dual_ascent, Objective};
use super::sampling::{grid_len, grid_point};
use super::{FilterResult, SolveStatus, SolverStats, FEASIBILITY_TOL};

/// Largest eigenvalue of a quadratic term still accepted as concave.
pub const CONCAVITY_TOL: f64 = 1e-8;

fn verification_samples(dim: usize) -> Option<usize> {
    match dim {
        1 => Some(2001),
        2 => Some(201),
        3 => Some(41),
        _ => None,
    }
}

fn worst(cons: &[QuadraticConstraint], u: &Input) -> f64 {
    cons.iter()
        .map(|c| c.margin(u))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum-norm deviation from `u_nom` subject to `a·u + b >= 0` for every
/// constraint and the box.
pub fn solve_qp_halfspace_box(
    u_nom: &Input,
    constraints: &[LinearConstraint],
    bx: &InputBox,
) -> Result<FilterResult> {
    let cons: Vec<QuadraticConstraint> = constraints.iter().cloned().map(Into::into).collect();
    solve_convex(u_nom, &cons, bx)
}

/// Minimum-norm deviation from `u_nom` subject to concave quadratic and
/// linear constraints and the box.
///
/// A quadratic term with an eigenvalue above [`CONCAVITY_TOL`] is rejected
/// with [`Error::NonConvex`] unless the projected nominal is already
/// admissible; use the nonlinear backend for such constraints.
pub fn solve_qcqp_box(
    u_nom: &Input,
    quad: &[QuadraticConstraint],
    lin: &[LinearConstraint],
    bx: &InputBox,
) -> Result<FilterResult> {
    let mut cons: Vec<QuadraticConstraint> = quad.to_vec();
    cons.extend(lin.iter().cloned().map(QuadraticConstraint::from));
    solve_convex(u_nom, &cons, bx)
}

fn solve_convex(
    u_nom: &Input,
    cons: &[QuadraticConstraint],
    bx: &InputBox,
) -> Result<FilterResult> {
    let clock = Stopwatch::start();
    let m = bx.dim();
    check_dim("nominal input", m, u_nom.len())?;
    for c in cons {
        check_dim("constraint gradient", m, c.q.len())?;
        check_dim("constraint quadratic term", m, c.q_mat.nrows())?;
        check_dim("constraint quadratic term", m, c.q_mat.ncols())?;
        if !c.c.is_finite() || c.q.iter().chain(c.q_mat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "constraint",
                reason: "coefficients must be finite",
            });
        }
    }
    if !u_nom.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "nominal input",
            reason: "must be finite",
        });
    }
    let finish = |u: Input, status, iterations, evaluations| {
        let margin = worst(cons, &u);
        FilterResult {
            objective: (&u - u_nom).norm(),
            margin,
            u,
            status,
            stats: SolverStats {
                iterations,
                evaluations,
                wall_time: clock.seconds(),
            },
        }
    };

    let projected = bx.project(u_nom);
    if worst(cons, &projected) >= 0.0 {
        return Ok(finish(projected, SolveStatus::Optimal, 0, 1));
    }
    for (index, c) in cons.iter().enumerate() {
        let eigenvalue = c.max_eigenvalue();
        if eigenvalue > CONCAVITY_TOL {
            return Err(Error::NonConvex { index, eigenvalue });
        }
    }

    let degenerate = cons
        .iter()
        .any(|c| c.c < 0.0 && c.q.iter().chain(c.q_mat.iter()).all(|v| *v == 0.0));
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut fallback = projected.clone();
    if !degenerate {
        let out = dual_ascent(&Objective::distance(u_nom), cons, bx);
        evaluations += out.evaluations;
        iterations = out.sweeps;
        if out.converged && worst(cons, &out.u) >= -FEASIBILITY_TOL {
            return Ok(finish(out.u, SolveStatus::Optimal, iterations, evaluations));
        }
        if worst(cons, &out.u) > worst(cons, &projected) {
            fallback = out.u;
        }
    }

    let Some(samples) = verification_samples(m) else {
        return Ok(finish(
            fallback,
            SolveStatus::Infeasible,
            iterations,
            evaluations,
        ));
    };
    // (distance², worst margin, point) of the nearest feasible and of the
    // least violating grid point.
    let mut nearest: Option<(f64, Input)> = None;
    let mut least: Option<(f64, f64, Input)> = None;
    for index in 0..grid_len(samples, m) {
        let p = grid_point(bx, samples, index);
        let w = worst(cons, &p);
        evaluations += 1;
        let d2 = (&p - u_nom).norm_squared();
        if w >= 0.0 {
            if nearest.as_ref().is_none_or(|(best, _)| d2 < *best) {
                nearest = Some((d2, p));
            }
        } else if least
            .as_ref()
            .is_none_or(|(bw, bd, _)| match w.partial_cmp(bw) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => d2 < *bd,
                _ => false,
            })
        {
            least = Some((w, d2, p));
        }
    }
    if let Some((_, p)) = nearest {
        return Ok(finish(
            p,
            SolveStatus::FeasibleSuboptimal,
            iterations,
            evaluations,
        ));
    }
    if let Some((w, _, p)) = least {
        if w > worst(cons, &fallback) {
            fallback = p;
        }
    }
    Ok(finish(
        fallback,
        SolveStatus::Infeasible,
        iterations,
        evaluations,
    ))
}
