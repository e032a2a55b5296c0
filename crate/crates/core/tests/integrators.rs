use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use zocbf::models::double_integrator::DoubleIntegrator;
use zocbf::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn pendulum() -> ControlAffineSystem {
    ControlAffineSystem::new(
        2,
        1,
        |x: &State| v(&[x[1], -x[0].sin()]),
        |_x: &State| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
}

/// Observed order of the local error from step sizes `t` and `t / 2`.
fn observed_order(tab: &ButcherTableau, t: f64) -> f64 {
    let sys = pendulum();
    let x = v(&[0.9, -0.4]);
    let u = v(&[0.3]);
    let err = |dt: f64| {
        let exact = flow_reference(&sys, &x, &u, dt, 2000).unwrap();
        (flow_step(&sys, &x, &u, dt, tab).unwrap() - exact).norm()
    };
    (err(t) / err(t / 2.0)).log2() - 1.0
}

#[test]
fn local_error_matches_declared_order() {
    for tab in [
        ButcherTableau::euler(),
        ButcherTableau::midpoint(),
        ButcherTableau::rk4(),
    ] {
        let p = observed_order(&tab, 0.1);
        assert!(
            (p - f64::from(tab.order())).abs() < 0.15,
            "order {} observed {p}",
            tab.order()
        );
    }
}

#[test]
fn with_order_selects_tableau() {
    assert_eq!(
        ButcherTableau::with_order(1).unwrap(),
        ButcherTableau::euler()
    );
    assert_eq!(
        ButcherTableau::with_order(2).unwrap(),
        ButcherTableau::midpoint()
    );
    assert_eq!(
        ButcherTableau::with_order(4).unwrap(),
        ButcherTableau::rk4()
    );
    assert!(ButcherTableau::with_order(3).is_err());
}

proptest! {
    #[test]
    fn rk4_is_exact_for_the_double_integrator(
        p in -20.0..20.0f64, vel in -10.0..10.0f64, u in -10.0..10.0f64, t in 0.001..1.0f64,
    ) {
        let next = flow_step(&DoubleIntegrator, &v(&[p, vel]), &v(&[u]), t, &ButcherTableau::rk4()).unwrap();
        let p_exact = p + vel * t + 0.5 * u * t * t;
        prop_assert!((next[0] - p_exact).abs() <= 1e-12 * (1.0 + p_exact.abs()));
        prop_assert!((next[1] - (vel + u * t)).abs() <= 1e-12 * (1.0 + vel.abs()));
    }

    #[test]
    fn reference_trajectory_ends_at_reference_flow(
        a in -1.5..1.5f64, b in -1.0..1.0f64, u in -1.0..1.0f64, n in 1usize..20,
    ) {
        let sys = pendulum();
        let x = v(&[a, b]);
        let path = flow_reference_trajectory(&sys, &x, &v(&[u]), 0.1, n).unwrap();
        prop_assert_eq!(path.len(), n + 1);
        prop_assert_eq!(&path[0], &x);
        prop_assert_eq!(path.last().unwrap(), &flow_reference(&sys, &x, &v(&[u]), 0.1, n).unwrap());
    }
}
