//! Sequential quadratic programming for general margins.
//!
//! Each iteration linearizes the margins by central differences, models the
//! Lagrangian curvature (clipped to stay positive definite), solves the
//! resulting box QP inside a trust region, and accepts the step on an ℓ1
//! merit function.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::condition::QuadraticConstraint;
use crate::diff::{finite_diff_grad, finite_diff_hessian};
use crate::error::{check_dim, Error, Result};
use crate::params::InputBox;
use crate::system::Input;

use super::clock::Stopwatch;
use super::dual::{dual_ascent, Objective};
use super::{FilterResult, MarginFn, SolveStatus, SolverStats};

const MIN_CURVATURE: f64 = 1e-4;
const MAX_PENALTY: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SqpOptions {
    pub max_iterations: usize,
    /// Margins above `-feasibility_tol` count as satisfied.
    pub feasibility_tol: f64,
    /// Initial trust radius as a fraction of the box diagonal.
    pub radius_fraction: f64,
    /// Second starting point tried when the first run ends infeasible,
    /// normally the previously applied input.
    pub restart_from: Option<Input>,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            feasibility_tol: 1e-6,
            radius_fraction: 0.1,
            restart_from: None,
        }
    }
}

impl SqpOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                field: "max_iterations",
                reason: "must be positive",
            });
        }
        if !(self.feasibility_tol >= 0.0 && self.feasibility_tol.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "feasibility_tol",
                reason: "must be finite and nonnegative",
            });
        }
        if !(self.radius_fraction > 0.0 && self.radius_fraction.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "radius_fraction",
                reason: "must be finite and positive",
            });
        }
        Ok(())
    }
}

struct Margins<'a, 'f> {
    fns: &'a [&'a MarginFn<'f>],
    evaluations: Cell<usize>,
}

impl Margins<'_, '_> {
    fn one(&self, i: usize, u: &Input) -> f64 {
        self.evaluations.set(self.evaluations.get() + 1);
        match (self.fns[i])(u) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NAN,
        }
    }

    /// All margins; a failed evaluation reads as `-inf`.
    fn all(&self, u: &Input) -> Vec<f64> {
        (0..self.fns.len())
            .map(|i| {
                let v = self.one(i, u);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect()
    }
}

fn worst(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn merit(u: &Input, u_nom: &Input, values: &[f64], penalty: f64) -> f64 {
    0.5 * (u - u_nom).norm_squared() + penalty * values.iter().map(|g| (-g).max(0.0)).sum::<f64>()
}

struct Run {
    u: Input,
    values: Vec<f64>,
    converged: bool,
    iterations: usize,
    /// Least violating iterate seen, used when the run ends infeasible.
    least: (f64, Input),
}

fn clip_positive(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(MIN_CURVATURE));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

fn run(
    margins: &Margins<'_, '_>,
    u_nom: &Input,
    bx: &InputBox,
    start: Input,
    opts: &SqpOptions,
) -> Run {
    let m = bx.dim();
    let k = margins.fns.len();
    let diagonal = bx.diagonal();
    let mut u = start;
    let mut values = margins.all(&u);
    let mut least = (worst(&values), u.clone());
    let mut lambda = vec![0.0; k];
    let mut penalty: f64 = 1.0;
    let mut radius = opts.radius_fraction * diagonal;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations && values.iter().all(|v| v.is_finite()) {
        iterations += 1;
        let mut grads = Vec::with_capacity(k);
        for i in 0..k {
            match finite_diff_grad(|v| margins.one(i, v), &u) {
                Ok(g) => grads.push(g),
                Err(_) => {
                    return Run {
                        u,
                        values,
                        converged,
                        iterations,
                        least,
                    }
                }
            }
        }
        let mut hess = DMatrix::identity(m, m);
        for (i, &l) in lambda.iter().enumerate().take(k) {
            if l > 0.0 {
                if let Ok(h) = finite_diff_hessian(|v| margins.one(i, v), &u) {
                    hess -= h * l;
                }
            }
        }
        let hess = clip_positive(&hess);
        let linear = u_nom + (&hess - DMatrix::identity(m, m)) * &u;
        let lin: Vec<QuadraticConstraint> = grads
            .iter()
            .zip(&values)
            .map(|(g, v)| QuadraticConstraint {
                q_mat: DMatrix::zeros(m, m),
                q: g.clone(),
                c: v - g.dot(&u),
            })
            .collect();
        let region = bx.shrink_around(&u, radius);
        let sub = dual_ascent(
            &Objective {
                hess: Some(&hess),
                linear,
            },
            &lin,
            &region,
        );
        if sub.converged {
            let largest = sub.lambda.iter().copied().fold(0.0, f64::max);
            penalty = penalty.max(1.5 * largest + 1e-3).min(MAX_PENALTY);
        } else {
            penalty = MAX_PENALTY;
        }
        let step: DVector<f64> = &sub.u - &u;
        let step_len = step.amax();
        let feasible = worst(&values) >= -opts.feasibility_tol;
        if step_len <= 1e-12 * (1.0 + u.amax()) {
            converged = feasible;
            break;
        }
        let here = merit(&u, u_nom, &values, penalty);
        let model_values: Vec<f64> = lin.iter().map(|c| c.margin(&sub.u)).collect();
        let curvature = 0.5 * step.dot(&((&hess - DMatrix::identity(m, m)) * &step));
        let predicted = here - merit(&sub.u, u_nom, &model_values, penalty) - curvature;
        if predicted <= 1e-15 * (1.0 + here.abs()) {
            converged = feasible;
            break;
        }
        let trial_values = margins.all(&sub.u);
        let ratio = (here - merit(&sub.u, u_nom, &trial_values, penalty)) / predicted;
        if ratio >= 0.1 {
            if ratio > 0.75 && step_len >= 0.99 * radius {
                radius = (2.0 * radius).min(diagonal);
            }
            u = sub.u;
            values = trial_values;
            if sub.converged {
                lambda = sub.lambda;
            }
            let w = worst(&values);
            if w > least.0 {
                least = (w, u.clone());
            }
        } else {
            radius = 0.25 * step_len;
            if radius <= 1e-12 * (1.0 + diagonal) {
                converged = feasible;
                break;
            }
        }
    }
    Run {
        u,
        values,
        converged,
        iterations,
        least,
    }
}

/// Minimum-norm deviation from `u_nom` keeping every margin nonnegative.
///
/// Starts from the projected nominal (returned unchanged when admissible)
/// and restarts from `opts.restart_from` if the first run ends infeasible.
pub fn solve_sqp_box(
    u_nom: &Input,
    margin_fns: &[&MarginFn<'_>],
    bx: &InputBox,
    opts: &SqpOptions,
) -> Result<FilterResult> {
    let clock = Stopwatch::start();
    check_dim("nominal input", bx.dim(), u_nom.len())?;
    opts.validate()?;
    let margins = Margins {
        fns: margin_fns,
        evaluations: Cell::new(0),
    };
    let finish = |u: Input, margin: f64, status, iterations| FilterResult {
        objective: (&u - u_nom).norm(),
        u,
        margin,
        status,
        stats: SolverStats {
            iterations,
            evaluations: margins.evaluations.get(),
            wall_time: clock.seconds(),
        },
    };

    let projected = bx.project(u_nom);
    let initial = margins.all(&projected);
    if worst(&initial) >= 0.0 {
        return Ok(finish(projected, worst(&initial), SolveStatus::Optimal, 0));
    }

    let mut iterations = 0;
    let mut starts = vec![projected];
    if let Some(r) = &opts.restart_from {
        check_dim("restart input", bx.dim(), r.len())?;
        let r = bx.project(r);
        if r != starts[0] {
            starts.push(r);
        }
    }
    let mut least: Option<(f64, Input)> = None;
    for start in starts {
        let out = run(&margins, u_nom, bx, start, opts);
        iterations += out.iterations;
        let w = worst(&out.values);
        if w >= -opts.feasibility_tol {
            let status = if out.converged {
                SolveStatus::Optimal
            } else {
                SolveStatus::FeasibleSuboptimal
            };
            return Ok(finish(out.u, w, status, iterations));
        }
        if least.as_ref().is_none_or(|(best, _)| out.least.0 > *best) {
            least = Some(out.least);
        }
    }
    let (w, u) = least.expect("at least one start");
    Ok(finish(u, w, SolveStatus::Infeasible, iterations))
}
