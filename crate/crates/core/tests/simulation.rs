use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use zocbf::models::double_integrator::{DoubleIntegrator, PositionLimit};
use zocbf::models::rollover::RolloverScenario;
use zocbf::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn di_setup(
    h: &PositionLimit,
    backend: FilterBackend,
    gamma_c: f64,
    delta: f64,
) -> SimulationSetup<'_, DoubleIntegrator> {
    SimulationSetup {
        system: &DoubleIntegrator,
        constraints: vec![h],
        params: ZocbfParams::new(0.1, delta, ClassKappa::linear(gamma_c).unwrap()).unwrap(),
        backend,
        input_box: DoubleIntegrator::default_box().unwrap(),
        options: FilterOptions::default(),
    }
}

fn zero() -> ConstantPolicy {
    ConstantPolicy(v(&[0.0]))
}

#[test]
fn equilibrium_stays_put() {
    let h1 = PositionLimit::new(10.0);
    let setup = di_setup(&h1, FilterBackend::LinearizedLinear, 1.0, 0.01);
    let log = simulate(&setup, &mut zero(), &v(&[3.0, 0.0]), None, 20).unwrap();
    assert!(log.states.iter().all(|s| s == &v(&[3.0, 0.0])));
    assert!(log.fine_h.iter().flatten().flatten().all(|h| *h == 7.0));
    let report = safety_report(&log, 1e-9);
    assert_eq!(report.interventions, 0);
    assert_eq!(report.first_violation, None);
}

#[test]
fn unfiltered_run_crosses_the_limit_after_five_seconds() {
    let h1 = PositionLimit::new(10.0);
    let setup = di_setup(&h1, FilterBackend::NoFilter, 1.0, 0.01);
    let log = simulate(&setup, &mut zero(), &v(&[0.0, 2.0]), Some(&v(&[0.0])), 100).unwrap();
    let report = safety_report(&log, 1e-9);
    let first = report.first_violation.unwrap();
    assert!((5.0..=5.0 + 0.1 / 10.0 + 1e-12).contains(&first), "{first}");
    assert_abs_diff_eq!(report.min_h[0], 10.0 - 2.0 * 10.0, epsilon = 1e-9);
}

#[test]
fn log_shapes_and_hold_semantics() {
    let h1 = PositionLimit::new(10.0);
    let setup = di_setup(&h1, FilterBackend::LinearizedLinear, 0.25, 0.01);
    let steps = 37;
    let log = simulate(&setup, &mut zero(), &v(&[0.0, 2.0]), None, steps).unwrap();
    assert_eq!(log.steps(), steps);
    assert_eq!(log.states.len(), steps + 1);
    assert_eq!(log.sampled_h.len(), steps + 1);
    assert_eq!(log.fine_h.len(), steps);
    assert!(log
        .fine_h
        .iter()
        .all(|s| s.len() == 1 && s[0].len() == log.substeps + 1));
    for k in 0..steps {
        assert_abs_diff_eq!(log.times[k], 0.1 * k as f64, epsilon = 1e-15);
        let next = flow_reference(
            &DoubleIntegrator,
            &log.states[k],
            &log.inputs[k],
            0.1,
            log.substeps,
        )
        .unwrap();
        assert_eq!(next, log.states[k + 1]);
        assert_eq!(log.fine_h[k][0][log.substeps], log.sampled_h[k + 1][0]);
    }
}

#[test]
fn gentle_class_kappa_keeps_position_limit() {
    // With γ_c = 0.25 the filter starts braking early enough for the box.
    let h1 = PositionLimit::new(10.0);
    for backend in [
        FilterBackend::LinearizedLinear,
        FilterBackend::RkNonlinear { order: 4 },
        FilterBackend::Sampling { samples: 401 },
    ] {
        let setup = di_setup(&h1, backend, 0.25, 0.01);
        let log = simulate(&setup, &mut zero(), &v(&[0.0, 2.0]), Some(&v(&[0.0])), 100).unwrap();
        let report = safety_report(&log, 1e-9);
        assert_eq!(report.infeasible_steps, 0, "{backend}");
        assert!(report.min_h[0] >= -1e-9, "{backend}: {}", report.min_h[0]);
        assert!(report.interventions > 0);
    }
}

#[test]
fn unsafe_start_recovers_by_at_least_delta_per_step() {
    let h1 = PositionLimit::new(10.0);
    let delta = 0.01;
    let setup = di_setup(&h1, FilterBackend::LinearizedLinear, 1.0, delta);
    let log = simulate(&setup, &mut zero(), &v(&[12.0, 0.0]), Some(&v(&[0.0])), 200).unwrap();
    let h: Vec<f64> = log.sampled_h.iter().map(|s| s[0]).collect();
    let recovered = h.iter().position(|x| *x >= 0.0).unwrap();
    assert!(recovered <= 200);
    for k in 0..recovered {
        assert!(h[k + 1] - h[k] >= delta - 1e-9);
    }
}

#[test]
fn runs_are_reproducible() {
    let scenario = RolloverScenario {
        steps: 120,
        ..RolloverScenario::default()
    };
    let robot = scenario.robot();
    let cons = robot.constraints();
    let setup = SimulationSetup {
        system: &robot,
        constraints: cons.iter().map(|c| c as &dyn Constraint).collect(),
        params: ZocbfParams::new(
            scenario.period,
            scenario.delta,
            ClassKappa::linear(1.0).unwrap(),
        )
        .unwrap(),
        backend: FilterBackend::RkNonlinear { order: 4 },
        input_box: scenario.input_box().unwrap(),
        options: FilterOptions::default(),
    };
    let mut tracker = scenario.tracker().unwrap();
    let strip = |mut log: SimulationLog| {
        for s in &mut log.stats {
            s.wall_time = 0.0;
        }
        log
    };
    let a = strip(
        simulate(
            &setup,
            &mut tracker,
            &scenario.initial_state(),
            None,
            scenario.steps,
        )
        .unwrap(),
    );
    let b = strip(
        simulate(
            &setup,
            &mut tracker,
            &scenario.initial_state(),
            None,
            scenario.steps,
        )
        .unwrap(),
    );
    assert_eq!(a, b);
    assert!(a
        .states
        .iter()
        .all(|s| (0.0..std::f64::consts::TAU).contains(&s[2])));
}

#[test]
fn divergence_returns_partial_log() {
    // ẋ = x², blowing up at t = 1 from x = 1.
    let sys = ControlAffineSystem::new(
        1,
        1,
        |x: &State| DVector::from_element(1, x[0] * x[0]),
        |_x: &State| DMatrix::zeros(1, 1),
    );
    let h = ConstraintFunction::new("h", |x: &State, _u: &Input| 1e300 - x[0]);
    let setup = SimulationSetup {
        system: &sys,
        constraints: vec![&h],
        params: ZocbfParams::new(0.5, 0.0, ClassKappa::linear(1.0).unwrap()).unwrap(),
        backend: FilterBackend::NoFilter,
        input_box: InputBox::uniform(1, -1.0, 1.0).unwrap(),
        options: FilterOptions {
            substeps: 2,
            ..FilterOptions::default()
        },
    };
    let err = simulate(&setup, &mut ConstantPolicy(v(&[0.0])), &v(&[1.0]), None, 50).unwrap_err();
    assert!(err.step > 0);
    assert_eq!(err.partial.steps(), err.step);
    assert_eq!(err.partial.states.len(), err.step + 1);
}

#[test]
fn default_initial_input_is_the_nominal() {
    let h1 = PositionLimit::new(10.0);
    let setup = di_setup(&h1, FilterBackend::LinearizedLinear, 1.0, 0.01);
    let mut policy = |_x: &State, _t: f64| v(&[1.5]);
    let log = simulate(&setup, &mut policy, &v(&[0.0, 0.0]), None, 3).unwrap();
    assert_eq!(log.inputs[0][0], 1.5);
    assert!(simulate(&setup, &mut policy, &v(&[0.0, 0.0]), None, 0).is_err());
}
