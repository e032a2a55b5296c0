//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line
//! and fails when its criterion does not hold.
//!
//! Run with `cargo test -p zocbf --test acceptance -- --nocapture
//! --test-threads=1` to see the lines in order.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use zocbf::models::double_integrator::{DoubleIntegrator, PositionLimit, PositionSquared};
use zocbf::models::rollover::RolloverScenario;
use zocbf::*;

fn verdict(n: u32, title: &str, ok: bool, detail: String) {
    println!(
        "criterion {n:>2} {title}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn di_params(gamma_c: f64, delta: f64) -> ZocbfParams {
    ZocbfParams::new(0.1, delta, ClassKappa::linear(gamma_c).unwrap()).unwrap()
}

fn di_setup<'a>(
    h: &'a dyn Constraint,
    backend: FilterBackend,
) -> SimulationSetup<'a, DoubleIntegrator> {
    SimulationSetup {
        system: &DoubleIntegrator,
        constraints: vec![h],
        params: di_params(1.0, 0.01),
        backend,
        input_box: DoubleIntegrator::default_box().unwrap(),
        options: FilterOptions::default(),
    }
}

/// Runs the double-integrator experiment; returns the log and its wall time.
fn di_run(
    h: &dyn Constraint,
    backend: FilterBackend,
    x0: &[f64],
    steps: usize,
) -> (SimulationLog, f64) {
    let setup = di_setup(h, backend);
    let mut policy = ConstantPolicy(v(&[0.0]));
    let start = Instant::now();
    let log = simulate(&setup, &mut policy, &v(x0), Some(&v(&[0.0])), steps).unwrap();
    (log, start.elapsed().as_secs_f64())
}

fn min_fine(log: &SimulationLog) -> f64 {
    safety_report(log, 1e-9)
        .min_h
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_01_position_limit_reproduction() {
    let h1 = PositionLimit::new(10.0);
    let (log, secs) = di_run(&h1, FilterBackend::LinearizedLinear, &[0.0, 2.0], 100);
    let (open, _) = di_run(&h1, FilterBackend::NoFilter, &[0.0, 2.0], 100);
    let filtered = safety_report(&log, 1e-9);
    let baseline = safety_report(&open, 1e-9);
    let first = baseline.first_violation.unwrap_or(f64::NAN);
    let ok = filtered.min_h[0] >= -1e-9 && (first - 5.0).abs() <= 0.1 && secs < 1.0;
    verdict(
        1,
        "position-limit reproduction",
        ok,
        format!(
            "min h1 {:.4e}, infeasible steps {}, baseline first violation {first:.3} s, runtime {secs:.3} s",
            filtered.min_h[0], filtered.infeasible_steps
        ),
    );
}

#[test]
fn criterion_02_squared_limit_reproduction() {
    let h2 = PositionSquared::new(10.0);
    let (log, secs) = di_run(&h2, FilterBackend::LinearizedQuadratic, &[0.0, 2.0], 100);
    let report = safety_report(&log, 1e-9);
    let all_optimal = log.status.iter().all(|s| *s == SolveStatus::Optimal);
    let ok = report.min_h[0] >= -1e-9 && all_optimal && secs < 1.0;
    verdict(
        2,
        "squared-limit reproduction",
        ok,
        format!(
            "min h2 {:.4e}, non-optimal steps {}, runtime {secs:.3} s",
            report.min_h[0],
            log.status
                .iter()
                .filter(|s| **s != SolveStatus::Optimal)
                .count()
        ),
    );
}

#[test]
fn criterion_03_backend_agreement() {
    let h1 = PositionLimit::new(10.0);
    let h2 = PositionSquared::new(10.0);
    let cases: [(&dyn Constraint, FilterBackend); 2] = [
        (&h1, FilterBackend::LinearizedLinear),
        (&h2, FilterBackend::LinearizedQuadratic),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (h, linearized) in cases {
        let (reference, _) = di_run(h, linearized, &[0.0, 2.0], 100);
        for backend in [
            FilterBackend::RkNonlinear { order: 4 },
            FilterBackend::Sampling { samples: 401 },
        ] {
            let (log, _) = di_run(h, backend, &[0.0, 2.0], 100);
            let min_h = min_fine(&log);
            let mut gap: f64 = 0.0;
            for k in 0..log.steps() {
                if log.status[k] == SolveStatus::Optimal
                    && reference.status[k] == SolveStatus::Optimal
                {
                    gap = gap.max((log.inputs[k][0] - reference.inputs[k][0]).abs());
                }
            }
            ok &= min_h >= -1e-9 && gap <= 0.05;
            details.push(format!(
                "{} {backend}: min h {min_h:.3e}, input gap {gap:.3}",
                h.name()
            ));
        }
    }
    verdict(3, "backend agreement", ok, details.join("; "));
}

#[test]
fn criterion_04_relative_degree_order_law() {
    let mut rng = StdRng::seed_from_u64(4);
    let h1 = PositionLimit::new(10.0);
    let mut euler_max: f64 = 0.0;
    let mut higher_min = f64::INFINITY;
    for _ in 0..100 {
        let x = v(&[rng.gen_range(-20.0..20.0), rng.gen_range(-10.0..10.0)]);
        let u0 = v(&[rng.gen_range(-10.0..10.0)]);
        let euler = input_sensitivity(
            &DoubleIntegrator,
            &h1,
            &x,
            &u0,
            0.1,
            &ButcherTableau::euler(),
        )
        .unwrap();
        euler_max = euler_max.max(euler[0].abs());
        for tab in [ButcherTableau::midpoint(), ButcherTableau::rk4()] {
            let s = input_sensitivity(&DoubleIntegrator, &h1, &x, &u0, 0.1, &tab).unwrap();
            higher_min = higher_min.min(s[0].abs());
        }
    }
    verdict(
        4,
        "relative degree versus integrator order",
        euler_max == 0.0 && higher_min >= 1e-6,
        format!("max |Euler| {euler_max:e}, min |RK2/RK4| {higher_min:.3e}"),
    );
}

#[test]
fn criterion_05_intersample_buffer() {
    let mut rng = StdRng::seed_from_u64(5);
    let h1 = PositionLimit::new(10.0);
    let period = 0.1;
    let delta = delta_lower_bound(1.0, 200f64.sqrt(), period);
    let (mut accepted, mut drawn) = (0, 0);
    let mut worst = f64::INFINITY;
    while accepted < 1000 {
        drawn += 1;
        // |v| <= 9 and |u| <= 10 keep |v(t)| <= 10 over one period.
        let x = v(&[rng.gen_range(-5.0..12.0), rng.gen_range(-9.0..9.0)]);
        let u = v(&[rng.gen_range(-10.0..10.0)]);
        let next = flow_reference(&DoubleIntegrator, &x, &u, period, 10).unwrap();
        if h1.value(&next, &u) < delta {
            continue;
        }
        accepted += 1;
        let (m, _) = min_h_intersample(&DoubleIntegrator, &h1, &x, &u, period, 100).unwrap();
        worst = worst.min(m);
    }
    verdict(
        5,
        "inter-sample buffer",
        worst >= -1e-9,
        format!("delta {delta:.4}, {accepted} of {drawn} draws, worst inter-sample h {worst:.4e}"),
    );
}

#[test]
fn criterion_06_recovery_from_unsafe_start() {
    let h1 = PositionLimit::new(10.0);
    let delta = 0.01;
    let (log, _) = di_run(&h1, FilterBackend::LinearizedLinear, &[12.0, 0.0], 300);
    let sampled: Vec<f64> = log.sampled_h.iter().map(|h| h[0]).collect();
    let recovered = sampled.iter().position(|h| *h >= 0.0);
    let mut increasing = true;
    let mut smallest_rise = f64::INFINITY;
    for k in 0..recovered.unwrap_or(sampled.len() - 1) {
        let rise = sampled[k + 1] - sampled[k];
        smallest_rise = smallest_rise.min(rise);
        increasing &= rise >= delta - 1e-9;
    }
    let limit = (2.0 / delta).ceil() as usize;
    let after = recovered.map(|r| {
        log.fine_h[r..]
            .iter()
            .flat_map(|s| s[0].iter().copied())
            .fold(f64::INFINITY, f64::min)
    });
    let ok =
        increasing && recovered.is_some_and(|r| r <= limit) && after.is_some_and(|m| m >= -1e-9);
    verdict(
        6,
        "recovery from an unsafe start",
        ok,
        format!(
            "nonnegative at step {recovered:?} (limit {limit}), smallest rise {smallest_rise:.4}, \
             min h1 afterwards {after:?}"
        ),
    );
}

#[test]
fn criterion_07_quadratic_term_is_concave() {
    let mut rng = StdRng::seed_from_u64(7);
    let h2 = PositionSquared::new(10.0);
    let params = di_params(1.0, 0.01);
    let model = affine_model(&DoubleIntegrator, &v(&[0.0, 0.0])).unwrap();
    let dm = discretize(&model, 0.1).unwrap();
    let mut largest = f64::NEG_INFINITY;
    for _ in 0..100 {
        let x = v(&[rng.gen_range(-20.0..20.0), rng.gen_range(-10.0..10.0)]);
        let u_prev = v(&[rng.gen_range(-10.0..10.0)]);
        let qc = quadratic_constraint(&h2, &dm, &model, &params, &x, &u_prev).unwrap();
        largest = largest.max(qc.max_eigenvalue());
    }
    verdict(
        7,
        "concave quadratic term",
        largest <= 1e-12,
        format!("largest eigenvalue {largest:e}"),
    );
}

/// Brute-force optimum over a `points`-per-dimension grid: the smallest
/// distance to `u_nom` among admissible grid points.
fn grid_optimum(
    u_nom: &DVector<f64>,
    cons: &[QuadraticConstraint],
    bx: &InputBox,
    points: usize,
) -> Option<f64> {
    let m = bx.dim();
    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; m];
    loop {
        let p = DVector::from_fn(m, |i, _| {
            let (lo, hi) = (bx.lower()[i], bx.upper()[i]);
            lo + (hi - lo) * idx[i] as f64 / (points - 1) as f64
        });
        if cons.iter().all(|c| c.margin(&p) >= 0.0) {
            let d = (&p - u_nom).norm();
            best = Some(best.map_or(d, |b| b.min(d)));
        }
        let mut i = 0;
        loop {
            if i == m {
                return best;
            }
            idx[i] += 1;
            if idx[i] < points {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn criterion_08_solver_oracle_equivalence() {
    let mut rng = StdRng::seed_from_u64(8);
    let points = 2001;
    let mut worst_gap: f64 = 0.0;
    let mut disagreements = 0;
    let mut compared = 0;
    for trial in 0..100 {
        let m = 1 + trial % 2;
        let lo: Vec<f64> = (0..m).map(|_| rng.gen_range(-10.0..-1.0)).collect();
        let hi: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..10.0)).collect();
        let bx = InputBox::from_slices(&lo, &hi).unwrap();
        let u_nom = DVector::from_fn(m, |_, _| rng.gen_range(-12.0..12.0));
        let quadratic = trial % 4 >= 2;
        let count = rng.gen_range(1..=2);
        let cons: Vec<QuadraticConstraint> = (0..count)
            .map(|_| {
                let q_mat = if quadratic {
                    let l = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
                    -(&l * l.transpose())
                } else {
                    DMatrix::zeros(m, m)
                };
                QuadraticConstraint {
                    q_mat,
                    q: DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0)),
                    c: rng.gen_range(-3.0..6.0),
                }
            })
            .collect();
        let result = if quadratic {
            solve_qcqp_box(&u_nom, &cons, &[], &bx).unwrap()
        } else {
            let lin: Vec<LinearConstraint> = cons
                .iter()
                .map(|c| LinearConstraint {
                    a: c.q.clone(),
                    b: c.c,
                })
                .collect();
            solve_qp_halfspace_box(&u_nom, &lin, &bx).unwrap()
        };
        let cell = bx
            .widths()
            .iter()
            .map(|w| (w / (points - 1) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        match grid_optimum(&u_nom, &cons, &bx, points) {
            Some(grid) => {
                compared += 1;
                let gap = (result.objective - grid).abs();
                worst_gap = worst_gap.max(gap / cell);
                if !result.status.is_feasible() || gap > cell {
                    disagreements += 1;
                }
            }
            // Admissible sets thinner than the grid are allowed to be found.
            None => {
                if result.status.is_feasible() && result.margin < -1e-8 {
                    disagreements += 1;
                }
            }
        }
    }
    verdict(
        8,
        "solver oracle equivalence",
        disagreements == 0,
        format!("{compared} grid-feasible instances, worst gap {worst_gap:.3} cells, {disagreements} disagreements"),
    );
}

#[test]
fn criterion_09_exact_discretization() {
    let t = 0.1;
    let model = affine_model(&DoubleIntegrator, &v(&[0.0, 0.0])).unwrap();
    let dm = discretize(&model, t).unwrap();
    let a_expected = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
    let b_expected = DMatrix::from_row_slice(2, 1, &[0.5 * t * t, t]);
    let err_a = (&dm.a_d - &a_expected).amax();
    let err_b = (dm.input_gain(&model) - &b_expected).amax();
    verdict(
        9,
        "exact discretization",
        err_a <= 1e-12 && err_b <= 1e-12,
        format!("max error A {err_a:e}, B {err_b:e}"),
    );
}

fn rollover_run(backend: FilterBackend) -> (SimulationLog, f64) {
    let scenario = RolloverScenario::default();
    let robot = scenario.robot();
    let cons = robot.constraints();
    let setup = SimulationSetup {
        system: &robot,
        constraints: cons.iter().map(|c| c as &dyn Constraint).collect(),
        params: ZocbfParams::new(
            scenario.period,
            scenario.delta,
            ClassKappa::linear(scenario.gamma_c).unwrap(),
        )
        .unwrap(),
        backend,
        input_box: scenario.input_box().unwrap(),
        options: FilterOptions::default(),
    };
    let mut tracker = scenario.tracker().unwrap();
    let start = Instant::now();
    let log = simulate(
        &setup,
        &mut tracker,
        &scenario.initial_state(),
        None,
        scenario.steps,
    )
    .unwrap();
    (log, start.elapsed().as_secs_f64())
}

#[test]
fn criterion_10_rollover_experiment() {
    let (open, _) = rollover_run(FilterBackend::NoFilter);
    let (filtered, secs) = rollover_run(FilterBackend::RkNonlinear { order: 4 });
    let open_min = min_fine(&open);
    let filtered_min = min_fine(&filtered);
    let ok = open_min < 0.0 && filtered_min >= -1e-6 && secs <= 60.0;
    verdict(
        10,
        "rollover experiment",
        ok,
        format!(
            "unfiltered min h {open_min:.4}, filtered min h {filtered_min:.4e}, \
             filtered interventions {}, runtime {secs:.2} s",
            safety_report(&filtered, 1e-6).interventions
        ),
    );
}

#[test]
fn criterion_11_sampling_matches_sqp_on_rollover() {
    let scenario = RolloverScenario::default();
    let robot = scenario.robot();
    let cons = robot.constraints();
    let refs: Vec<&dyn Constraint> = cons.iter().map(|c| c as &dyn Constraint).collect();
    let params = ZocbfParams::new(
        scenario.period,
        scenario.delta,
        ClassKappa::linear(scenario.gamma_c).unwrap(),
    )
    .unwrap();
    let bx = scenario.input_box().unwrap();
    let (log, _) = rollover_run(FilterBackend::RkNonlinear { order: 4 });

    // Steps where the filter modified the box-clamped nominal come first.
    let mut steps: Vec<usize> = (0..log.steps())
        .filter(|&k| (&log.inputs[k] - bx.project(&log.nominal[k])).norm() > 1e-9)
        .collect();
    let rest: Vec<usize> = (0..log.steps())
        .filter(|k| !steps.contains(k))
        .step_by(7)
        .collect();
    steps.extend(rest);
    steps.truncate(50);

    let samples = 401;
    let cell = bx
        .widths()
        .iter()
        .map(|w| (w / (samples - 1) as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let opts = FilterOptions::default();
    let (mut worst_gap, mut failures, mut interventions): (f64, usize, usize) = (0.0, 0, 0);
    for &k in &steps {
        let u_prev = if k == 0 {
            log.nominal[0].clone()
        } else {
            log.inputs[k - 1].clone()
        };
        let x = &log.states[k];
        let step = |backend| {
            safety_filter_step(
                &backend,
                &robot,
                &refs,
                &params,
                x,
                &u_prev,
                &log.nominal[k],
                &bx,
                &opts,
            )
            .unwrap()
        };
        let sqp = step(FilterBackend::RkNonlinear { order: 4 });
        let grid = step(FilterBackend::Sampling { samples });
        if (&sqp.u - bx.project(&log.nominal[k])).norm() > 1e-9 {
            interventions += 1;
        }
        let gap = (grid.objective - sqp.objective).abs();
        worst_gap = worst_gap.max(gap);
        if !sqp.status.is_feasible() || !grid.status.is_feasible() || gap > cell {
            failures += 1;
        }
    }
    verdict(
        11,
        "sampling versus SQP on rollover",
        steps.len() == 50 && failures == 0,
        format!(
            "{} steps ({interventions} interventions), worst objective gap {worst_gap:.4} (cell {cell:.4}), \
             {failures} failures",
            steps.len()
        ),
    );
}
