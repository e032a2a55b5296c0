//! Closed-loop sampled-data simulation with a zero-order hold.
//!
//! At each sampling instant the nominal policy proposes an input, the safety
//! filter selects the applied input, and the plant is propagated over the
//! period with the reference flow. Every constraint is logged on the
//! substep grid `t_k + jT/N`, `j = 0..=N`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::constraint::Constraint;
use crate::error::{check_dim, Error, Result};
use crate::integrators::flow_reference_trajectory;
use crate::params::{InputBox, ZocbfParams};
use crate::solvers::{safety_filter_step, FilterBackend, FilterOptions, SolveStatus, SolverStats};
use crate::system::{ControlAffine, Input, State};

/// Fine-grid values below `-VIOLATION_TOL` count as safety violations.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Source of the nominal (performance) input.
pub trait NominalPolicy {
    fn nominal(&mut self, x: &State, t: f64) -> Input;

    /// Clears internal state; called at the start of every simulation.
    fn reset(&mut self) {}
}

impl<F: FnMut(&State, f64) -> Input> NominalPolicy for F {
    fn nominal(&mut self, x: &State, t: f64) -> Input {
        self(x, t)
    }
}

/// The same input at every instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy(pub Input);

impl NominalPolicy for ConstantPolicy {
    fn nominal(&mut self, _x: &State, _t: f64) -> Input {
        self.0.clone()
    }
}

/// Everything but the nominal policy and the initial condition.
pub struct SimulationSetup<'a, S: ControlAffine + ?Sized> {
    pub system: &'a S,
    pub constraints: Vec<&'a dyn Constraint>,
    pub params: ZocbfParams,
    pub backend: FilterBackend,
    pub input_box: InputBox,
    /// Also fixes the number of substeps used for propagation and logging.
    pub options: FilterOptions,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationLog {
    pub constraint_names: Vec<String>,
    pub period: f64,
    pub substeps: usize,
    /// Sampling instants `t_k`, one per completed step.
    pub times: Vec<f64>,
    /// `x_0, ..., x_K`; one more entry than `inputs`.
    pub states: Vec<State>,
    /// Input held over `[t_k, t_{k+1})`.
    pub inputs: Vec<Input>,
    pub nominal: Vec<Input>,
    /// Worst margin reported by the filter, in the backend's own model.
    pub filter_margins: Vec<f64>,
    /// `h_i(x_k, u_{k-1})` for `k = 0..=K`, with `u_{-1}` the initial input.
    pub sampled_h: Vec<Vec<f64>>,
    /// `fine_h[k][i][j] = h_i(x(t_k + jT/N), u_k)`, `j = 0..=N`.
    pub fine_h: Vec<Vec<Vec<f64>>>,
    pub status: Vec<SolveStatus>,
    pub stats: Vec<SolverStats>,
}

impl SimulationLog {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Time of fine-grid point `j` in step `k`.
    pub fn fine_time(&self, k: usize, j: usize) -> f64 {
        self.times[k] + self.period * j as f64 / self.substeps as f64
    }
}

/// A run that stopped early; `partial` holds the steps completed before the
/// failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulation aborted at step {step}: {source}")]
pub struct SimulationError {
    pub step: usize,
    #[source]
    pub source: Error,
    pub partial: Box<SimulationLog>,
}

/// Runs `steps` filtered periods from `x0`.
///
/// `u_init` is the input taken as held before `t = 0`; it defaults to the
/// nominal input at `x0`. Filter infeasibility does not stop the run: the
/// least-violating input is applied and the step is flagged.
pub fn simulate<S, P>(
    setup: &SimulationSetup<'_, S>,
    policy: &mut P,
    x0: &State,
    u_init: Option<&Input>,
    steps: usize,
) -> Result<SimulationLog, SimulationError>
where
    S: ControlAffine + ?Sized,
    P: NominalPolicy + ?Sized,
{
    let sys = setup.system;
    let substeps = setup.options.substeps;
    let period = setup.params.period;
    let mut log = SimulationLog {
        constraint_names: setup
            .constraints
            .iter()
            .map(|h| h.name().to_string())
            .collect(),
        period,
        substeps,
        ..SimulationLog::default()
    };
    let abort = |step, source, log: SimulationLog| SimulationError {
        step,
        source,
        partial: Box::new(log),
    };
    let checks = (|| {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                field: "steps",
                reason: "must be >= 1",
            });
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter {
                field: "substeps",
                reason: "must be >= 1",
            });
        }
        setup.params.validate()?;
        setup.backend.validate()?;
        check_dim("initial state", sys.state_dim(), x0.len())?;
        check_dim("input box", sys.input_dim(), setup.input_box.dim())?;
        if let Some(u) = u_init {
            check_dim("initial input", sys.input_dim(), u.len())?;
        }
        Ok(())
    })();
    if let Err(e) = checks {
        return Err(abort(0, e, log));
    }

    policy.reset();
    let mut x = sys.normalize(x0.clone());
    let mut u_prev = match u_init {
        Some(u) => u.clone(),
        None => policy.nominal(&x, 0.0),
    };
    if let Err(e) = check_dim("nominal input", sys.input_dim(), u_prev.len()) {
        return Err(abort(0, e, log));
    }
    log.states.push(x.clone());
    log.sampled_h.push(
        setup
            .constraints
            .iter()
            .map(|h| h.value(&x, &u_prev))
            .collect(),
    );

    for k in 0..steps {
        let t = k as f64 * period;
        let u_nom = policy.nominal(&x, t);
        let result = match safety_filter_step(
            &setup.backend,
            sys,
            &setup.constraints,
            &setup.params,
            &x,
            &u_prev,
            &u_nom,
            &setup.input_box,
            &setup.options,
        ) {
            Ok(r) => r,
            Err(e) => return Err(abort(k, e, log)),
        };
        let u = result.u;
        let path = match flow_reference_trajectory(sys, &x, &u, period, substeps) {
            Ok(p) => p,
            Err(e) => return Err(abort(k, e, log)),
        };
        let fine = setup
            .constraints
            .iter()
            .map(|h| path.iter().map(|s| h.value(s, &u)).collect())
            .collect();
        let next = sys.normalize(path.into_iter().next_back().expect("nonempty path"));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(abort(k, Error::Divergence { stage: 0 }, log));
        }

        log.times.push(t);
        log.nominal.push(u_nom);
        log.filter_margins.push(result.margin);
        log.status.push(result.status);
        log.stats.push(result.stats);
        log.fine_h.push(fine);
        log.sampled_h.push(
            setup
                .constraints
                .iter()
                .map(|h| h.value(&next, &u))
                .collect(),
        );
        log.states.push(next.clone());
        log.inputs.push(u.clone());
        x = next;
        u_prev = u;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub steps: usize,
    /// Minimum fine-grid value per constraint (`+inf` for an empty log).
    pub min_h: Vec<f64>,
    /// Earliest fine-grid time with some constraint below `-VIOLATION_TOL`.
    pub first_violation: Option<f64>,
    /// Steps with `‖u - u_nom‖` above the tolerance.
    pub interventions: usize,
    pub max_intervention: f64,
    /// Seconds; zero for an empty log.
    pub mean_solve_time: f64,
    pub infeasible_steps: usize,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Summarizes a complete or partial log. `tolerance` is the deviation from
/// the nominal input above which a step counts as an intervention.
pub fn safety_report(log: &SimulationLog, tolerance: f64) -> SafetyReport {
    let count = log.constraint_names.len();
    let mut min_h = alloc::vec![f64::INFINITY; count];
    let mut first_violation = None;
    for (k, per_step) in log.fine_h.iter().enumerate() {
        for (i, values) in per_step.iter().enumerate() {
            for (j, v) in values.iter().enumerate() {
                min_h[i] = min_h[i].min(*v);
                if *v < -VIOLATION_TOL || v.is_nan() {
                    let t = log.fine_time(k, j);
                    if first_violation.is_none_or(|f| t < f) {
                        first_violation = Some(t);
                    }
                }
            }
        }
    }
    let deviations: Vec<f64> = log
        .inputs
        .iter()
        .zip(&log.nominal)
        .map(|(u, n)| (u - n).norm())
        .collect();
    let steps = log.steps();
    SafetyReport {
        steps,
        min_h,
        first_violation,
        interventions: deviations.iter().filter(|d| **d > tolerance).count(),
        max_intervention: deviations.iter().copied().fold(0.0, f64::max),
        mean_solve_time: if steps == 0 {
            0.0
        } else {
            log.stats.iter().map(|s| s.wall_time).sum::<f64>() / steps as f64
        },
        infeasible_steps: log.status.iter().filter(|s| !s.is_feasible()).count(),
    }
}
