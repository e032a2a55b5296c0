//! Central finite differences, the fallback whenever a model does not
//! supply analytic derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative step for first derivatives.
pub const GRADIENT_STEP: f64 = 1e-6;
/// Relative step for second derivatives.
pub const HESSIAN_STEP: f64 = 1e-4;

fn step(scale: f64, coordinate: f64) -> f64 {
    scale * libm::fabs(coordinate).max(1.0)
}

/// Central-difference gradient of a scalar map. The step along coordinate
/// `i` is `1e-6 * max(1, |point[i]|)`.
pub fn finite_diff_grad<F>(map: F, point: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = point.clone();
    let mut grad = DVector::zeros(point.len());
    for i in 0..point.len() {
        let h = step(GRADIENT_STEP, point[i]);
        probe[i] = point[i] + h;
        let plus = map(&probe);
        probe[i] = point[i] - h;
        let minus = map(&probe);
        probe[i] = point[i];
        let d = (plus - minus) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::NonFinite { coordinate: i });
        }
        grad[i] = d;
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector map, one column per coordinate.
pub fn finite_diff_jacobian<F>(map: F, point: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut probe = point.clone();
    let rows = map(point).len();
    let mut jac = DMatrix::zeros(rows, point.len());
    for j in 0..point.len() {
        let h = step(GRADIENT_STEP, point[j]);
        probe[j] = point[j] + h;
        let plus = map(&probe);
        probe[j] = point[j] - h;
        let minus = map(&probe);
        probe[j] = point[j];
        let col = (plus - minus) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { coordinate: j });
        }
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Symmetric central-difference Hessian of a scalar map.
pub fn finite_diff_hessian<F>(map: F, point: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = point.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = point.clone();
    let center = map(point);
    for i in 0..n {
        let hi = step(HESSIAN_STEP, point[i]);
        probe[i] = point[i] + hi;
        let plus = map(&probe);
        probe[i] = point[i] - hi;
        let minus = map(&probe);
        probe[i] = point[i];
        let d = (plus - 2.0 * center + minus) / (hi * hi);
        if !d.is_finite() {
            return Err(Error::NonFinite { coordinate: i });
        }
        hess[(i, i)] = d;
        for j in 0..i {
            let hj = step(HESSIAN_STEP, point[j]);
            let mut corner = |si: f64, sj: f64| {
                probe[i] = point[i] + si * hi;
                probe[j] = point[j] + sj * hj;
                let v = map(&probe);
                probe[i] = point[i];
                probe[j] = point[j];
                v
            };
            let d = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hi * hj);
            if !d.is_finite() {
                return Err(Error::NonFinite { coordinate: i });
            }
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn affine_gradient() {
        let g = finite_diff_grad(|x| 10.0 - x[0], &DVector::from_element(1, 3.0)).unwrap();
        assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-6);
    }

    #[test]
    fn quadratic_gradient() {
        let g = finite_diff_grad(|x| 10.0 - x[0] * x[0], &DVector::from_element(1, 2.0)).unwrap();
        assert_abs_diff_eq!(g[0], -4.0, epsilon = 1e-5);
    }

    #[test]
    fn sine_gradient_at_origin() {
        let g = finite_diff_grad(|x| libm::sin(x[0]), &DVector::zeros(1)).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_names_coordinate() {
        let p = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let err = finite_diff_grad(|x| if x[1] > 0.0 { f64::NAN } else { x[0] }, &p).unwrap_err();
        assert_eq!(err, Error::NonFinite { coordinate: 1 });
    }

    #[test]
    fn hessian_of_mixed_quadratic() {
        let p = DVector::from_vec(alloc::vec![0.3, -1.2]);
        let h = finite_diff_hessian(|x| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + x[1], &p).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 6.0, epsilon = 1e-6);
        assert_abs_diff_eq!(h[(0, 1)], -2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(h[(1, 1)], 0.0, epsilon = 1e-6);
    }
}
