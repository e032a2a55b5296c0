//! Builds the plant, constraints and nominal policy for a resolved
//! configuration and runs the closed loop.

use zocbf::models::double_integrator::{DoubleIntegrator, PositionLimit, PositionSquared};
use zocbf::simulation::NominalPolicy;
use zocbf::{
    safety_report, simulate, ConstantPolicy, Constraint, ControlAffine, FilterOptions, Input,
    SafetyReport, SimulationLog, SimulationSetup, State,
};

use crate::config::{ModelSettings, Resolved};

/// Result of one run; `aborted` carries the failing step and message when
/// the simulation stopped early, in which case `log` is partial.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: SimulationLog,
    pub report: SafetyReport,
    pub aborted: Option<(usize, String)>,
}

impl RunOutcome {
    /// Safe on the fine grid with a feasible filter at every step.
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.report.is_safe() && self.report.infeasible_steps == 0
    }
}

fn run_with<S: ControlAffine + ?Sized>(
    cfg: &Resolved,
    system: &S,
    constraints: Vec<&dyn Constraint>,
    policy: &mut dyn NominalPolicy,
) -> RunOutcome {
    let setup = SimulationSetup {
        system,
        constraints,
        params: cfg.params,
        backend: cfg.backend,
        input_box: cfg.input_box.clone(),
        options: FilterOptions {
            substeps: cfg.substeps,
            ..FilterOptions::default()
        },
    };
    let x0 = State::from_column_slice(&cfg.x0);
    let u_init = cfg.u_init.as_deref().map(Input::from_column_slice);
    let (log, aborted) = match simulate(&setup, policy, &x0, u_init.as_ref(), cfg.steps) {
        Ok(log) => (log, None),
        Err(e) => (*e.partial, Some((e.step, e.source.to_string()))),
    };
    let report = safety_report(&log, cfg.intervention_tol);
    RunOutcome {
        log,
        report,
        aborted,
    }
}

/// Runs the experiment described by `cfg`.
pub fn execute(cfg: &Resolved) -> RunOutcome {
    let constant = cfg
        .nominal
        .as_deref()
        .map(|u| ConstantPolicy(Input::from_column_slice(u)));
    match &cfg.settings {
        ModelSettings::DoubleIntegrator { squared, limit } => {
            let mut policy = constant.unwrap_or_else(|| ConstantPolicy(Input::zeros(1)));
            let (h1, h2) = (PositionLimit::new(*limit), PositionSquared::new(*limit));
            let h: &dyn Constraint = if *squared { &h2 } else { &h1 };
            run_with(cfg, &DoubleIntegrator, vec![h], &mut policy)
        }
        ModelSettings::Rollover(scenario) => {
            let robot = scenario.robot();
            let [plus, minus] = robot.constraints();
            let constraints: Vec<&dyn Constraint> = vec![&plus, &minus];
            match constant {
                Some(mut policy) => run_with(cfg, &robot, constraints, &mut policy),
                None => {
                    // Waypoints and radius were validated with the config.
                    let mut tracker = scenario.tracker().expect("validated tracker settings");
                    run_with(cfg, &robot, constraints, &mut tracker)
                }
            }
        }
    }
}
