use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use zocbf::models::double_integrator::{DoubleIntegrator, PositionLimit, PositionSquared};
use zocbf::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn di_linearized() -> (AffineModel, DiscreteModel) {
    let model = affine_model(&DoubleIntegrator, &v(&[0.0, 0.0])).unwrap();
    let dm = discretize(&model, 0.1).unwrap();
    (model, dm)
}

proptest! {
    #[test]
    fn linear_class_kappa_properties(gc in 0.001..=1.0f64, s in -50.0..50.0f64, t in -50.0..50.0f64) {
        let gamma = ClassKappa::linear(gc).unwrap();
        prop_assert_eq!(gamma.eval(0.0), 0.0);
        prop_assert!(gamma.eval(s).abs() <= s.abs());
        if s < t {
            prop_assert!(gamma.eval(s) < gamma.eval(t));
        }
        prop_assert_eq!(gamma_eval(&gamma, s), gamma.eval(s));
    }

    /// For a linear plant and a linear constraint the linear approximation
    /// is exact.
    #[test]
    fn linear_constraint_is_exact_for_position_limit(
        p in -20.0..20.0f64, vel in -10.0..10.0f64, up in -10.0..10.0f64, u in -10.0..10.0f64,
        gc in 0.01..=1.0f64, delta in 0.0..0.5f64,
    ) {
        let h1 = PositionLimit::new(10.0);
        let params = ZocbfParams::new(0.1, delta, ClassKappa::linear(gc).unwrap()).unwrap();
        let (model, dm) = di_linearized();
        let x = v(&[p, vel]);
        let lc = linear_constraint(&h1, &dm, &model, &params, &x, &v(&[up])).unwrap();
        let exact = exact_margin(
            &DoubleIntegrator, &h1, &params, &x, &v(&[up]), &v(&[u]), &Flow::Step(ButcherTableau::rk4()),
        ).unwrap();
        prop_assert!((lc.margin(&v(&[u])) - exact).abs() < 1e-10);
    }

    /// The quadratic approximation with the half-Hessian weight is exact for
    /// a quadratic constraint on a linear plant.
    #[test]
    fn half_hessian_quadratic_is_exact_for_squared_limit(
        p in -5.0..5.0f64, vel in -5.0..5.0f64, up in -10.0..10.0f64, u in -10.0..10.0f64,
    ) {
        let h2 = PositionSquared::new(10.0);
        let params = ZocbfParams::new(0.1, 0.01, ClassKappa::linear(0.5).unwrap())
            .unwrap()
            .with_curvature(Curvature::HalfHessian);
        let (model, dm) = di_linearized();
        let x = v(&[p, vel]);
        let qc = quadratic_constraint(&h2, &dm, &model, &params, &x, &v(&[up])).unwrap();
        let exact = exact_margin(
            &DoubleIntegrator, &h2, &params, &x, &v(&[up]), &v(&[u]), &Flow::Reference { substeps: 10 },
        ).unwrap();
        prop_assert!((qc.margin(&v(&[u])) - exact).abs() < 1e-9 * (1.0 + exact.abs()));
    }

    #[test]
    fn concave_constraint_gives_negative_semidefinite_term(
        p in -20.0..20.0f64, vel in -10.0..10.0f64, up in -10.0..10.0f64, full in any::<bool>(),
    ) {
        let h2 = PositionSquared::new(10.0);
        let curvature = if full { Curvature::FullHessian } else { Curvature::HalfHessian };
        let params = ZocbfParams::new(0.1, 0.01, ClassKappa::linear(1.0).unwrap())
            .unwrap()
            .with_curvature(curvature);
        let (model, dm) = di_linearized();
        let qc = quadratic_constraint(&h2, &dm, &model, &params, &v(&[p, vel]), &v(&[up])).unwrap();
        prop_assert!(qc.max_eigenvalue() <= 1e-12);
    }

    #[test]
    fn integrator_order_below_relative_degree_hides_the_input(
        p in -20.0..20.0f64, vel in -10.0..10.0f64, u in -10.0..10.0f64,
    ) {
        let h1 = PositionLimit::new(10.0);
        let x = v(&[p, vel]);
        let u = v(&[u]);
        let euler = input_sensitivity(&DoubleIntegrator, &h1, &x, &u, 0.1, &ButcherTableau::euler()).unwrap();
        prop_assert_eq!(euler[0], 0.0);
        for tab in [ButcherTableau::midpoint(), ButcherTableau::rk4()] {
            let s = input_sensitivity(&DoubleIntegrator, &h1, &x, &u, 0.1, &tab).unwrap();
            prop_assert!((s[0] + 0.005).abs() < 1e-8);
        }
    }

    /// Divided by the period, the linear condition for a relative-degree-one
    /// constraint is the continuous-time barrier condition.
    #[test]
    fn small_period_recovers_continuous_condition(x in -0.9..0.9f64, u in -2.0..2.0f64, gc in 0.01..=1.0f64) {
        let period = 1e-4;
        let sys = ControlAffineSystem::new(
            1,
            1,
            |_x: &State| DVector::zeros(1),
            |_x: &State| DMatrix::identity(1, 1),
        );
        let h = ConstraintFunction::new("disc", |x: &State, _u: &Input| 1.0 - x[0] * x[0]);
        let gamma = ClassKappa::linear(gc).unwrap();
        let params = ZocbfParams::new(period, 0.0, gamma).unwrap();
        let xs = v(&[x]);
        let model = affine_model(&sys, &xs).unwrap();
        let dm = discretize(&model, period).unwrap();
        let lc = linear_constraint(&h, &dm, &model, &params, &xs, &v(&[0.0])).unwrap();
        let cbf = conventional_cbf_margin(&sys, &h, &gamma, period, &xs, &v(&[u])).unwrap();
        prop_assert!((lc.margin(&v(&[u])) / period - cbf).abs() <= 1e-6 * (1.0 + cbf.abs()));
    }

    #[test]
    fn delta_bound_keeps_position_limit_between_samples(
        p in -5.0..12.0f64, vel in -9.0..9.0f64, u in -10.0..10.0f64,
    ) {
        let h1 = PositionLimit::new(10.0);
        let delta = delta_lower_bound(1.0, 200f64.sqrt(), 0.1);
        let x = v(&[p, vel]);
        let u = v(&[u]);
        let next = flow_reference(&DoubleIntegrator, &x, &u, 0.1, 10).unwrap();
        prop_assume!(h1.value(&next, &u) >= delta);
        let (m, _) = min_h_intersample(&DoubleIntegrator, &h1, &x, &u, 0.1, 50).unwrap();
        prop_assert!(m >= -1e-9);
    }
}
