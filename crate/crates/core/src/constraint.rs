//! Safety constraints `h(x, u) >= 0`.

use alloc::boxed::Box;
use alloc::string::String;

use nalgebra::{DMatrix, DVector};

use crate::diff::{finite_diff_grad, finite_diff_hessian, finite_diff_jacobian};
use crate::error::Result;
use crate::system::{Input, State};

/// A scalar safety constraint; the safe set is `{(x, u) : h(x, u) >= 0}`.
///
/// Derivatives are optional. [`gradients`] and [`hessian`] fall back to
/// central differences when a method returns `None`.
pub trait Constraint: Sync {
    fn value(&self, x: &State, u: &Input) -> f64;

    fn grad_x(&self, _x: &State, _u: &Input) -> Option<DVector<f64>> {
        None
    }

    fn grad_u(&self, _x: &State, _u: &Input) -> Option<DVector<f64>> {
        None
    }

    /// Second-derivative matrix over the stacked argument `(x, u)`.
    fn hessian(&self, _x: &State, _u: &Input) -> Option<DMatrix<f64>> {
        None
    }

    fn name(&self) -> &str {
        "h"
    }
}

fn stack(x: &State, u: &Input) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

fn split(z: &DVector<f64>, n: usize) -> (State, Input) {
    (
        z.rows(0, n).into_owned(),
        z.rows(n, z.len() - n).into_owned(),
    )
}

/// `(∇ₓh, ∇ᵤh)` at `(x, u)`.
pub fn gradients<H: Constraint + ?Sized>(
    h: &H,
    x: &State,
    u: &Input,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let gx = match h.grad_x(x, u) {
        Some(g) => g,
        None => finite_diff_grad(|p| h.value(p, u), x)?,
    };
    let gu = match h.grad_u(x, u) {
        Some(g) => g,
        None => finite_diff_grad(|p| h.value(x, p), u)?,
    };
    Ok((gx, gu))
}

/// Symmetric second-derivative matrix of `h` over `(x, u)`.
///
/// Without an analytic Hessian this differentiates the gradients when both
/// are analytic, and `h` itself twice otherwise.
pub fn hessian<H: Constraint + ?Sized>(h: &H, x: &State, u: &Input) -> Result<DMatrix<f64>> {
    if let Some(m) = h.hessian(x, u) {
        return Ok(m);
    }
    let n = x.len();
    let z = stack(x, u);
    let m = if h.grad_x(x, u).is_some() && h.grad_u(x, u).is_some() {
        let jac = finite_diff_jacobian(
            |p| {
                let (px, pu) = split(p, n);
                let gx = h.grad_x(&px, &pu).unwrap_or_else(|| DVector::zeros(n));
                let gu = h
                    .grad_u(&px, &pu)
                    .unwrap_or_else(|| DVector::zeros(pu.len()));
                stack(&gx, &gu)
            },
            &z,
        )?;
        (&jac + jac.transpose()) * 0.5
    } else {
        finite_diff_hessian(
            |p| {
                let (px, pu) = split(p, n);
                h.value(&px, &pu)
            },
            &z,
        )?
    };
    Ok(m)
}

type ScalarMap = Box<dyn Fn(&State, &Input) -> f64 + Send + Sync>;
type GradMap = Box<dyn Fn(&State, &Input) -> DVector<f64> + Send + Sync>;
type HessMap = Box<dyn Fn(&State, &Input) -> DMatrix<f64> + Send + Sync>;

/// A [`Constraint`] assembled from closures.
pub struct ConstraintFunction {
    name: String,
    h: ScalarMap,
    grad_x: Option<GradMap>,
    grad_u: Option<GradMap>,
    hess: Option<HessMap>,
}

impl ConstraintFunction {
    pub fn new<F>(name: &str, h: F) -> Self
    where
        F: Fn(&State, &Input) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            h: Box::new(h),
            grad_x: None,
            grad_u: None,
            hess: None,
        }
    }

    pub fn with_grad_x<F>(mut self, f: F) -> Self
    where
        F: Fn(&State, &Input) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_x = Some(Box::new(f));
        self
    }

    pub fn with_grad_u<F>(mut self, f: F) -> Self
    where
        F: Fn(&State, &Input) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_u = Some(Box::new(f));
        self
    }

    pub fn with_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&State, &Input) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hess = Some(Box::new(f));
        self
    }
}

impl Constraint for ConstraintFunction {
    fn value(&self, x: &State, u: &Input) -> f64 {
        (self.h)(x, u)
    }

    fn grad_x(&self, x: &State, u: &Input) -> Option<DVector<f64>> {
        self.grad_x.as_ref().map(|g| g(x, u))
    }

    fn grad_u(&self, x: &State, u: &Input) -> Option<DVector<f64>> {
        self.grad_u.as_ref().map(|g| g(x, u))
    }

    fn hessian(&self, x: &State, u: &Input) -> Option<DMatrix<f64>> {
        self.hess.as_ref().map(|g| g(x, u))
    }

    fn name(&self) -> &str {
        &self.name
    }
}
