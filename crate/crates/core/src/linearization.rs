//! Affine approximation of the dynamics about the current state and its exact
//! zero-order-hold discretization.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::system::{drift_jacobian, ControlAffine, Input, State};

/// `ξ̇ = A ξ + B u + C`, the linearization of the plant about `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// `A_D = e^{AT}` and `B_D = ∫₀ᵀ e^{As} ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
}

impl DiscreteModel {
    /// `B_D B`, the sensitivity of the predicted state to the held input.
    pub fn input_gain(&self, model: &AffineModel) -> DMatrix<f64> {
        &self.b_d * &model.b
    }

    /// `A_D x_k + B_D C - x_k`, the input-free displacement over one period.
    pub fn drift_displacement(&self, model: &AffineModel, x_k: &State) -> DVector<f64> {
        &self.a_d * x_k + &self.b_d * &model.c - x_k
    }
}

/// Linearize `sys` about `x_k`. `x_k` need not be an equilibrium.
pub fn affine_model<S: ControlAffine + ?Sized>(sys: &S, x_k: &State) -> Result<AffineModel> {
    check_dim("state", sys.state_dim(), x_k.len())?;
    let a = drift_jacobian(sys, x_k).map_err(|e| match e {
        Error::NonFinite { coordinate } => Error::Linearization {
            row: 0,
            col: coordinate,
        },
        other => other,
    })?;
    if let Some(((row, col), _)) = a
        .iter()
        .enumerate()
        .map(|(k, v)| ((k % a.nrows(), k / a.nrows()), v))
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::Linearization { row, col });
    }
    let b = sys.input_matrix(x_k);
    let c = sys.drift(x_k) - &a * x_k;
    Ok(AffineModel { a, b, c })
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
/// Largest 1-norm for which the degree-13 Padé approximant is accurate to
/// double precision without scaling.
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| libm::fabs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            what: "matrix exponential (columns)",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "matrix",
            reason: "entries must be finite",
        });
    }
    let k = m.nrows();
    let norm = norm1(m);
    let squarings = if norm > THETA13 {
        libm::ceil(libm::log2(norm / THETA13)) as i32
    } else {
        0
    };
    let a = m * libm::exp2(-(squarings as f64));
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(k, k);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom.lu().solve(&numer).ok_or(Error::Overflow)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(r)
}

/// Exact discretization through the block exponential
/// `exp([[A, I], [0, 0]] T) = [[A_D, B_D], [0, I]]`.
pub fn discretize(model: &AffineModel, period: f64) -> Result<DiscreteModel> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "period",
            reason: "must be finite and > 0",
        });
    }
    let n = model.a.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a * period));
    aug.view_mut((0, n), (n, n))
        .copy_from(&(DMatrix::<f64>::identity(n, n) * period));
    let e = expm(&aug)?;
    Ok(DiscreteModel {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, n)).into_owned(),
    })
}

/// `x̂_{k+1} = A_D x_k + B_D B u + B_D C`.
pub fn predict_state_linear(
    dm: &DiscreteModel,
    model: &AffineModel,
    x_k: &State,
    u: &Input,
) -> Result<State> {
    check_dim("state", dm.a_d.ncols(), x_k.len())?;
    check_dim("input", model.b.ncols(), u.len())?;
    Ok(&dm.a_d * x_k + &dm.b_d * (&model.b * u + &model.c))
}
