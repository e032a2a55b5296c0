//! One filtering step: build the margins for the chosen backend and solve.

use alloc::vec::Vec;

use crate::condition::{
    exact_margin, linear_constraint, quadratic_constraint, Flow, LinearConstraint,
    QuadraticConstraint,
};
use crate::constraint::Constraint;
use crate::error::{check_dim, Result};
use crate::integrators::{ButcherTableau, DEFAULT_SUBSTEPS};
use crate::linearization::{affine_model, discretize};
use crate::params::{InputBox, ZocbfParams};
use crate::system::{ControlAffine, Input, State};

use super::clock::Stopwatch;
use super::{
    solve_qcqp_box, solve_qp_halfspace_box, solve_sampling, solve_sqp_box, FilterBackend,
    FilterResult, MarginFn, SolveStatus, SolverStats, SqpOptions, FEASIBILITY_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOptions {
    /// RK4 substeps per period for the reference flow (sampling and
    /// no-filter margins).
    pub substeps: usize,
    pub sqp: SqpOptions,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            sqp: SqpOptions::default(),
        }
    }
}

/// Selects the input applied over the next period.
///
/// `u_prev` is the input held during the previous period. Without an
/// explicit restart point the nonlinear backend restarts from `u_prev`.
#[allow(clippy::too_many_arguments)]
pub fn safety_filter_step<S: ControlAffine + ?Sized>(
    backend: &FilterBackend,
    sys: &S,
    constraints: &[&dyn Constraint],
    params: &ZocbfParams,
    x_k: &State,
    u_prev: &Input,
    u_nom: &Input,
    bx: &InputBox,
    opts: &FilterOptions,
) -> Result<FilterResult> {
    backend.validate()?;
    params.validate()?;
    check_dim("state", sys.state_dim(), x_k.len())?;
    check_dim("previous input", sys.input_dim(), u_prev.len())?;
    check_dim("nominal input", sys.input_dim(), u_nom.len())?;
    check_dim("input box", sys.input_dim(), bx.dim())?;

    match *backend {
        FilterBackend::LinearizedLinear => {
            let model = affine_model(sys, x_k)?;
            let dm = discretize(&model, params.period)?;
            let lin = constraints
                .iter()
                .map(|h| linear_constraint(*h, &dm, &model, params, x_k, u_prev))
                .collect::<Result<Vec<LinearConstraint>>>()?;
            solve_qp_halfspace_box(u_nom, &lin, bx)
        }
        FilterBackend::LinearizedQuadratic => {
            let model = affine_model(sys, x_k)?;
            let dm = discretize(&model, params.period)?;
            let quad = constraints
                .iter()
                .map(|h| quadratic_constraint(*h, &dm, &model, params, x_k, u_prev))
                .collect::<Result<Vec<QuadraticConstraint>>>()?;
            solve_qcqp_box(u_nom, &quad, &[], bx)
        }
        FilterBackend::RkNonlinear { order } => {
            let flow = Flow::Step(ButcherTableau::with_order(order)?);
            let margins = flow_margins(sys, constraints, params, x_k, u_prev, flow);
            let refs: Vec<&MarginFn<'_>> = margins.iter().map(|f| f.as_ref()).collect();
            let mut sqp = opts.sqp.clone();
            sqp.restart_from.get_or_insert_with(|| u_prev.clone());
            solve_sqp_box(u_nom, &refs, bx, &sqp)
        }
        FilterBackend::Sampling { samples } => {
            let flow = Flow::Reference {
                substeps: opts.substeps,
            };
            let margins = flow_margins(sys, constraints, params, x_k, u_prev, flow);
            let refs: Vec<&MarginFn<'_>> = margins.iter().map(|f| f.as_ref()).collect();
            solve_sampling(u_nom, &refs, bx, samples)
        }
        FilterBackend::NoFilter => {
            let clock = Stopwatch::start();
            let flow = Flow::Reference {
                substeps: opts.substeps,
            };
            let u = bx.project(u_nom);
            let mut margin = f64::INFINITY;
            for h in constraints {
                margin = margin.min(exact_margin(sys, *h, params, x_k, u_prev, &u, &flow)?);
            }
            let status = if margin >= -FEASIBILITY_TOL {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
            Ok(FilterResult {
                objective: (&u - u_nom).norm(),
                u,
                margin,
                status,
                stats: SolverStats {
                    iterations: 0,
                    evaluations: constraints.len(),
                    wall_time: clock.seconds(),
                },
            })
        }
    }
}

type BoxedMargin<'a> = alloc::boxed::Box<MarginFn<'a>>;

fn flow_margins<'a, S: ControlAffine + ?Sized>(
    sys: &'a S,
    constraints: &[&'a dyn Constraint],
    params: &'a ZocbfParams,
    x_k: &'a State,
    u_prev: &Input,
    flow: Flow,
) -> Vec<BoxedMargin<'a>> {
    constraints
        .iter()
        .map(|h| {
            let h: &'a dyn Constraint = *h;
            let threshold = params.threshold(h.value(x_k, u_prev));
            let flow = flow.clone();
            let f: BoxedMargin<'a> = alloc::boxed::Box::new(move |u: &Input| {
                let next = flow.advance(sys, x_k, u, params.period)?;
                Ok(h.value(&next, u) - threshold)
            });
            f
        })
        .collect()
}
