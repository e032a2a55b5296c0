//! Dual coordinate ascent for
//!
//! ```text
//! minimize ½ uᵀ H u - rᵀ u   s.t.  uᵀ Qᵢ u + qᵢ·u + cᵢ >= 0,  u in box
//! ```
//!
//! with `H` positive definite and every `Qᵢ` negative semidefinite. Each
//! multiplier is updated by bisection on its (monotone) constraint value; the
//! Lagrangian minimizer over the box is a clamp when `H = I` and all `Qᵢ = 0`,
//! and a projected-Newton box QP otherwise.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::condition::QuadraticConstraint;
use crate::params::InputBox;
use crate::system::Input;

use super::FEASIBILITY_TOL;

const MAX_SWEEPS: usize = 500;
const LAMBDA_CAP: f64 = 1e14;

/// Quadratic objective `½ uᵀ H u - linearᵀ u`; `H = I` when `hess` is `None`.
pub(crate) struct Objective<'a> {
    pub hess: Option<&'a DMatrix<f64>>,
    pub linear: DVector<f64>,
}

impl Objective<'_> {
    /// `½‖u - u_nom‖²` up to a constant.
    pub fn distance(u_nom: &Input) -> Objective<'static> {
        Objective {
            hess: None,
            linear: u_nom.clone(),
        }
    }
}

pub(crate) struct DualOutcome {
    pub u: Input,
    pub lambda: Vec<f64>,
    pub sweeps: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Lagrangian<'a> {
    obj: &'a Objective<'a>,
    cons: &'a [QuadraticConstraint],
    bx: &'a InputBox,
    clamp_only: bool,
    evaluations: usize,
}

impl Lagrangian<'_> {
    fn minimizer(&mut self, lambda: &[f64], warm: &Input) -> Input {
        self.evaluations += 1;
        let m = self.bx.dim();
        let mut r = self.obj.linear.clone();
        for (l, c) in lambda.iter().zip(self.cons) {
            if *l != 0.0 {
                r.axpy(*l, &c.q, 1.0);
            }
        }
        if self.clamp_only {
            return self.bx.project(&r);
        }
        let mut h = match self.obj.hess {
            Some(h) => h.clone(),
            None => DMatrix::identity(m, m),
        };
        for (l, c) in lambda.iter().zip(self.cons) {
            if *l != 0.0 {
                h -= &c.q_mat * (2.0 * l);
            }
        }
        box_qp(&h, &r, self.bx, warm)
    }
}

pub(crate) fn dual_ascent(
    obj: &Objective<'_>,
    cons: &[QuadraticConstraint],
    bx: &InputBox,
) -> DualOutcome {
    let clamp_only = obj.hess.is_none() && cons.iter().all(|c| c.q_mat.iter().all(|v| *v == 0.0));
    let mut lag = Lagrangian {
        obj,
        cons,
        bx,
        clamp_only,
        evaluations: 0,
    };
    let mut lambda = vec![0.0; cons.len()];
    let mut u = lag.minimizer(&lambda, &bx.project(&obj.linear));
    let mut converged = false;
    let mut sweeps = 0;
    let mut blocked = false;
    while sweeps < MAX_SWEEPS && !blocked {
        sweeps += 1;
        let before = lambda.clone();
        for i in 0..cons.len() {
            lambda[i] = 0.0;
            let free = lag.minimizer(&lambda, &u);
            if cons[i].margin(&free) >= 0.0 {
                u = free;
                continue;
            }
            let mut lo = 0.0;
            let mut hi = before[i].max(1e-3);
            loop {
                lambda[i] = hi;
                let trial = lag.minimizer(&lambda, &u);
                if cons[i].margin(&trial) >= 0.0 {
                    break;
                }
                lo = hi;
                hi *= 4.0;
                if hi > LAMBDA_CAP {
                    blocked = true;
                    break;
                }
            }
            if blocked {
                lambda[i] = lo;
                break;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                    break;
                }
                lambda[i] = mid;
                let trial = lag.minimizer(&lambda, &u);
                if cons[i].margin(&trial) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lambda[i] = hi;
            u = lag.minimizer(&lambda, &u);
        }
        u = lag.minimizer(&lambda, &u);
        let change = lambda
            .iter()
            .zip(&before)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max);
        let scale = 1.0 + lambda.iter().copied().fold(0.0, f64::max);
        let feasible = cons.iter().all(|c| c.margin(&u) >= -FEASIBILITY_TOL);
        if feasible && change <= 1e-12 * scale {
            converged = true;
            break;
        }
    }
    if clamp_only && converged {
        if let Some((polished, mu)) = polish_linear(&obj.linear, cons, bx, &lambda) {
            u = polished;
            lambda = mu;
        }
    }
    DualOutcome {
        u,
        lambda,
        sweeps,
        evaluations: lag.evaluations,
        converged,
    }
}

/// Solves the KKT system of the identified active set exactly. Returns `None`
/// if the result is not a consistent KKT point.
fn polish_linear(
    u_nom: &Input,
    cons: &[QuadraticConstraint],
    bx: &InputBox,
    lambda: &[f64],
) -> Option<(Input, Vec<f64>)> {
    let m = bx.dim();
    let active: Vec<usize> = (0..cons.len()).filter(|i| lambda[*i] > 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let mut z = u_nom.clone();
    for &i in &active {
        z.axpy(lambda[i], &cons[i].q, 1.0);
    }
    let (lo, hi) = (bx.lower(), bx.upper());
    let fixed: Vec<Option<f64>> = (0..m)
        .map(|j| {
            if z[j] < lo[j] {
                Some(lo[j])
            } else if z[j] > hi[j] {
                Some(hi[j])
            } else {
                None
            }
        })
        .collect();
    let k = active.len();
    let mut mat = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (r, &i) in active.iter().enumerate() {
        let a = &cons[i].q;
        let mut v = -cons[i].c;
        for j in 0..m {
            match fixed[j] {
                Some(b) => v -= a[j] * b,
                None => v -= a[j] * u_nom[j],
            }
        }
        rhs[r] = v;
        for (c, &l) in active.iter().enumerate() {
            let b = &cons[l].q;
            mat[(r, c)] = (0..m)
                .filter(|j| fixed[*j].is_none())
                .map(|j| a[j] * b[j])
                .sum();
        }
    }
    let mu = mat.lu().solve(&rhs)?;
    if mu.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    let mut z = u_nom.clone();
    for (r, &i) in active.iter().enumerate() {
        z.axpy(mu[r], &cons[i].q, 1.0);
    }
    let mut u = z.clone();
    for j in 0..m {
        match fixed[j] {
            Some(b) => {
                // The unclamped point must stay beyond the same bound.
                if (b == lo[j] && z[j] > lo[j]) || (b == hi[j] && z[j] < hi[j]) {
                    return None;
                }
                u[j] = b;
            }
            None => {
                if z[j] < lo[j] || z[j] > hi[j] {
                    return None;
                }
            }
        }
    }
    if cons.iter().any(|c| c.margin(&u) < -1e-12) {
        return None;
    }
    let mut full = vec![0.0; cons.len()];
    for (r, &i) in active.iter().enumerate() {
        full[i] = mu[r];
    }
    Some((u, full))
}

/// `argmin ½ uᵀ H u - rᵀ u` over the box, `H` symmetric positive definite.
/// Projected Newton with an Armijo search along the projection arc.
pub(crate) fn box_qp(h: &DMatrix<f64>, r: &DVector<f64>, bx: &InputBox, start: &Input) -> Input {
    let m = bx.dim();
    let (lo, hi) = (bx.lower(), bx.upper());
    let value = |u: &Input| 0.5 * u.dot(&(h * u)) - r.dot(u);
    let mut u = bx.project(start);
    for _ in 0..100 {
        let grad = h * &u - r;
        let scale = 1.0 + grad.amax() + u.amax();
        let free: Vec<usize> = (0..m)
            .filter(|&j| {
                let at_lo = u[j] <= lo[j] && grad[j] > 0.0;
                let at_hi = u[j] >= hi[j] && grad[j] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let projected_grad = free
            .iter()
            .map(|&j| libm::fabs(grad[j]))
            .fold(0.0, f64::max);
        if free.is_empty() || projected_grad <= 1e-14 * scale {
            break;
        }
        let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let gf = DVector::from_fn(free.len(), |a, _| -grad[free[a]]);
        let step = match hff.clone().cholesky() {
            Some(ch) => ch.solve(&gf),
            None => match hff.lu().solve(&gf) {
                Some(s) => s,
                None => gf,
            },
        };
        let mut dir = DVector::zeros(m);
        for (a, &j) in free.iter().enumerate() {
            dir[j] = step[a];
        }
        let f0 = value(&u);
        let mut t = 1.0;
        let mut next = bx.project(&(&u + &dir * t));
        while value(&next) > f0 + 1e-4 * grad.dot(&(&next - &u)) && t > 1e-12 {
            t *= 0.5;
            next = bx.project(&(&u + &dir * t));
        }
        let moved = (&next - &u).amax();
        u = next;
        if moved <= 1e-16 * scale {
            break;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn box_qp_hits_bounds() {
        let bx = InputBox::uniform(2, -1.0, 1.0).unwrap();
        let h = dmatrix![2.0, 0.5; 0.5, 1.0];
        let r = DVector::from_vec(vec![10.0, -0.2]);
        let u = box_qp(&h, &r, &bx, &DVector::zeros(2));
        // u0 pinned at 1; u1 solves 0.5 + u1 = -0.2.
        assert_abs_diff_eq!(u[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(u[1], -0.7, epsilon = 1e-12);
    }

    #[test]
    fn two_halfspaces_meet_at_corner() {
        let bx = InputBox::uniform(2, -10.0, 10.0).unwrap();
        // u0 <= 1 and u1 <= 2, nominal (5, 5).
        let cons = [
            QuadraticConstraint {
                q_mat: DMatrix::zeros(2, 2),
                q: DVector::from_vec(vec![-1.0, 0.0]),
                c: 1.0,
            },
            QuadraticConstraint {
                q_mat: DMatrix::zeros(2, 2),
                q: DVector::from_vec(vec![0.0, -1.0]),
                c: 2.0,
            },
        ];
        let nominal = DVector::from_vec(vec![5.0, 5.0]);
        let out = dual_ascent(&Objective::distance(&nominal), &cons, &bx);
        assert!(out.converged);
        assert_eq!(out.u.as_slice(), &[1.0, 2.0]);
        assert_abs_diff_eq!(out.lambda[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.lambda[1], 3.0, epsilon = 1e-12);
    }
}
