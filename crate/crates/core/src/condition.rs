//! The zero-order barrier condition
//!
//! ```text
//! h(φ(T; x_k, u), u) - h(x_k, u_prev) >= -γ(h(x_k, u_prev)) + δ (+ mismatch)
//! ```
//!
//! evaluated exactly (through a flow map) or through the linear and quadratic
//! approximations used by the linearization backend.

use nalgebra::{DMatrix, DVector};

use crate::constraint::{gradients, hessian, Constraint};
use crate::diff::finite_diff_grad;
use crate::error::{check_dim, Result};
use crate::integrators::{flow_reference, flow_step, ButcherTableau};
use crate::linearization::{AffineModel, DiscreteModel};
use crate::params::{ClassKappa, Curvature, ZocbfParams};
use crate::system::{ControlAffine, Input, State};

/// How the next-sample state is predicted.
#[derive(Debug, Clone, PartialEq)]
pub enum Flow {
    /// `substeps` RK4 steps per period.
    Reference { substeps: usize },
    /// A single explicit Runge–Kutta step.
    Step(ButcherTableau),
}

impl Flow {
    pub fn advance<S: ControlAffine + ?Sized>(
        &self,
        sys: &S,
        x: &State,
        u: &Input,
        period: f64,
    ) -> Result<State> {
        match self {
            Flow::Reference { substeps } => flow_reference(sys, x, u, period, *substeps),
            Flow::Step(tab) => flow_step(sys, x, u, period, tab),
        }
    }
}

/// Margin of the ZOCBF inequality at input `u`; `u` is admissible iff the
/// result is nonnegative.
pub fn exact_margin<S, H>(
    sys: &S,
    h: &H,
    params: &ZocbfParams,
    x_k: &State,
    u_prev: &Input,
    u: &Input,
    flow: &Flow,
) -> Result<f64>
where
    S: ControlAffine + ?Sized,
    H: Constraint + ?Sized,
{
    let threshold = params.threshold(h.value(x_k, u_prev));
    let next = flow.advance(sys, x_k, u, params.period)?;
    Ok(h.value(&next, u) - threshold)
}

/// Smallest robustness buffer `δ = h̄ₓ M T` for which reaching
/// `h >= δ` at the next sample keeps `h >= 0` throughout the period, given
/// `‖∂h/∂x‖ <= h̄ₓ` and `‖f + g u‖ <= M`.
pub fn delta_lower_bound(hbar_x: f64, speed_bound: f64, period: f64) -> f64 {
    hbar_x * speed_bound * period
}

/// First- or second-order Taylor model of `h` about `(x_k, u_prev)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorModel {
    pub x_k: State,
    pub u_prev: Input,
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_u: DVector<f64>,
    /// Weighted curvature matrix over the stacked deviation `(x - x_k, u - u_prev)`.
    pub curvature: Option<DMatrix<f64>>,
}

impl TaylorModel {
    pub fn eval(&self, x: &State, u: &Input) -> f64 {
        let dx = x - &self.x_k;
        let du = u - &self.u_prev;
        let mut v = self.value + self.grad_x.dot(&dx) + self.grad_u.dot(&du);
        if let Some(j) = &self.curvature {
            let mut d = DVector::zeros(dx.len() + du.len());
            d.rows_mut(0, dx.len()).copy_from(&dx);
            d.rows_mut(dx.len(), du.len()).copy_from(&du);
            v += d.dot(&(j * &d));
        }
        v
    }
}

/// `h̃₁(x, u) = h + ∇ₓh·(x - x_k) + ∇ᵤh·(u - u_prev)`.
pub fn taylor1_h<H: Constraint + ?Sized>(
    h: &H,
    x_k: &State,
    u_prev: &Input,
) -> Result<TaylorModel> {
    let (grad_x, grad_u) = gradients(h, x_k, u_prev)?;
    Ok(TaylorModel {
        x_k: x_k.clone(),
        u_prev: u_prev.clone(),
        value: h.value(x_k, u_prev),
        grad_x,
        grad_u,
        curvature: None,
    })
}

/// [`taylor1_h`] plus the quadratic term `w · Δᵀ J Δ`, with `J` the Hessian of
/// `h` and `w` set by `curvature` (1 for the full Hessian, ½ for the Taylor form).
pub fn taylor2_h<H: Constraint + ?Sized>(
    h: &H,
    x_k: &State,
    u_prev: &Input,
    curvature: Curvature,
) -> Result<TaylorModel> {
    let mut model = taylor1_h(h, x_k, u_prev)?;
    model.curvature = Some(hessian(h, x_k, u_prev)? * curvature.weight());
    Ok(model)
}

/// `a · u + b >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn margin(&self, u: &Input) -> f64 {
        self.a.dot(u) + self.b
    }
}

/// `uᵀ Q u + q · u + c >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub q_mat: DMatrix<f64>,
    pub q: DVector<f64>,
    pub c: f64,
}

impl QuadraticConstraint {
    pub fn margin(&self, u: &Input) -> f64 {
        u.dot(&(&self.q_mat * u)) + self.q.dot(u) + self.c
    }

    pub fn gradient(&self, u: &Input) -> DVector<f64> {
        &self.q_mat * u * 2.0 + &self.q
    }

    /// Largest eigenvalue of the (symmetrized) quadratic term.
    pub fn max_eigenvalue(&self) -> f64 {
        let sym = (&self.q_mat + self.q_mat.transpose()) * 0.5;
        sym.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl From<LinearConstraint> for QuadraticConstraint {
    fn from(lin: LinearConstraint) -> Self {
        let m = lin.a.len();
        Self {
            q_mat: DMatrix::zeros(m, m),
            q: lin.a,
            c: lin.b,
        }
    }
}

/// Pieces shared by the linear and quadratic approximations.
struct Expansion {
    /// `B_D B`.
    gain: DMatrix<f64>,
    /// Stacked deviation at `u = 0`: `(A_D x_k + B_D C - x_k, -u_prev)`.
    offset: DVector<f64>,
    lin: LinearConstraint,
}

fn expand<H: Constraint + ?Sized>(
    h: &H,
    dm: &DiscreteModel,
    model: &AffineModel,
    params: &ZocbfParams,
    x_k: &State,
    u_prev: &Input,
) -> Result<(Expansion, TaylorModel)> {
    check_dim("state", dm.a_d.nrows(), x_k.len())?;
    check_dim("previous input", model.b.ncols(), u_prev.len())?;
    let taylor = taylor1_h(h, x_k, u_prev)?;
    let gain = dm.input_gain(model);
    let drift = dm.drift_displacement(model, x_k);
    let n = x_k.len();
    let m = u_prev.len();
    let mut offset = DVector::zeros(n + m);
    offset.rows_mut(0, n).copy_from(&drift);
    offset.rows_mut(n, m).copy_from(&(-u_prev));
    let a = gain.transpose() * &taylor.grad_x + &taylor.grad_u;
    let kappa = taylor.grad_x.dot(&drift) - taylor.grad_u.dot(u_prev)
        + params.gamma.eval(taylor.value)
        - params.delta
        - params.mismatch;
    Ok((
        Expansion {
            gain,
            offset,
            lin: LinearConstraint { a, b: kappa },
        },
        taylor,
    ))
}

/// Linear approximation of the condition: first-order Taylor model of `h`
/// composed with the linear state prediction.
pub fn linear_constraint<H: Constraint + ?Sized>(
    h: &H,
    dm: &DiscreteModel,
    model: &AffineModel,
    params: &ZocbfParams,
    x_k: &State,
    u_prev: &Input,
) -> Result<LinearConstraint> {
    Ok(expand(h, dm, model, params, x_k, u_prev)?.0.lin)
}

/// Quadratic approximation of the condition. Concave `h` yields a
/// negative-semidefinite `Q`, hence a convex feasible set.
pub fn quadratic_constraint<H: Constraint + ?Sized>(
    h: &H,
    dm: &DiscreteModel,
    model: &AffineModel,
    params: &ZocbfParams,
    x_k: &State,
    u_prev: &Input,
) -> Result<QuadraticConstraint> {
    let (exp, _) = expand(h, dm, model, params, x_k, u_prev)?;
    let jac = hessian(h, x_k, u_prev)? * params.curvature.weight();
    let n = x_k.len();
    let m = u_prev.len();
    // Deviation map u ↦ S u + s0 with S = [B_D B; I].
    let mut s = DMatrix::zeros(n + m, m);
    s.view_mut((0, 0), (n, m)).copy_from(&exp.gain);
    s.view_mut((n, 0), (m, m))
        .copy_from(&DMatrix::<f64>::identity(m, m));
    let js = &jac * &s;
    let q_raw = s.transpose() * &js;
    let q_mat = (&q_raw + q_raw.transpose()) * 0.5;
    let jsym = (&jac + jac.transpose()) * 0.5;
    let q = &exp.lin.a + s.transpose() * (&jsym * &exp.offset) * 2.0;
    let c = exp.lin.b + exp.offset.dot(&(&jac * &exp.offset));
    Ok(QuadraticConstraint { q_mat, q, c })
}

/// Continuous-time CBF condition `∂b/∂x (f + g u) + γ(b(x)) / T` for a
/// state-only constraint, the small-`T` limit of the linear approximation
/// under forward Euler.
pub fn conventional_cbf_margin<S, H>(
    sys: &S,
    b_fn: &H,
    gamma: &ClassKappa,
    period: f64,
    x: &State,
    u: &Input,
) -> Result<f64>
where
    S: ControlAffine + ?Sized,
    H: Constraint + ?Sized,
{
    let (grad_x, _) = gradients(b_fn, x, u)?;
    Ok(grad_x.dot(&sys.vector_field(x, u)) + gamma.eval(b_fn.value(x, u)) / period)
}

/// Finite-difference gradient of `u ↦ h(flow_step(x_k, u))` at `u0`. Zero
/// whenever the integrator order is below the relative degree of `h`.
pub fn input_sensitivity<S, H>(
    sys: &S,
    h: &H,
    x_k: &State,
    u0: &Input,
    period: f64,
    tab: &ButcherTableau,
) -> Result<DVector<f64>>
where
    S: ControlAffine + ?Sized,
    H: Constraint + ?Sized,
{
    let failure = core::cell::Cell::new(None);
    let grad = finite_diff_grad(
        |u| match flow_step(sys, x_k, u, period, tab) {
            Ok(next) => h.value(&next, u0),
            Err(e) => {
                let first = failure.take().unwrap_or(e);
                failure.set(Some(first));
                f64::NAN
            }
        },
        u0,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => grad,
    }
}
