//! Parameter sweeps over `gamma_c`, `delta`, `period` and `backend`.
//!
//! A grid spec lists axes separated by `;`, each `key=v1,v2,...`, for
//! example `gamma_c=0.25,0.5,1;backend=linearized_linear,rk_nonlinear:4`.
//! Cells enumerate the cross product with the first axis varying slowest.
//! An empty spec has no cells.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use zocbf::FilterBackend;

use crate::config::{ConfigError, ExperimentConfig};
use crate::experiment::{execute, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    GammaC,
    Delta,
    Period,
    Backend,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::GammaC, Axis::Delta, Axis::Period, Axis::Backend];

    pub fn key(self) -> &'static str {
        match self {
            Axis::GammaC => "gamma_c",
            Axis::Delta => "delta",
            Axis::Period => "period",
            Axis::Backend => "backend",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValue {
    Number(f64),
    Backend(FilterBackend),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Number(v) => write!(f, "{v}"),
            AxisValue::Backend(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub axes: Vec<(Axis, Vec<AxisValue>)>,
}

impl FromStr for Grid {
    type Err = ConfigError;

    fn from_str(spec: &str) -> Result<Self, ConfigError> {
        let mut axes: Vec<(Axis, Vec<AxisValue>)> = Vec::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part.split_once('=').ok_or_else(|| {
                ConfigError::field("grid", format!("expected key=values in `{part}`"))
            })?;
            let key = key.trim();
            let axis = Axis::ALL
                .into_iter()
                .find(|a| a.key() == key)
                .ok_or_else(|| ConfigError::field("grid", format!("unknown axis `{key}`")))?;
            if axes.iter().any(|(a, _)| *a == axis) {
                return Err(ConfigError::field(
                    "grid",
                    format!("axis `{key}` given twice"),
                ));
            }
            let values = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| match axis {
                    Axis::Backend => {
                        FilterBackend::from_str(v)
                            .map(AxisValue::Backend)
                            .map_err(|e| {
                                ConfigError::field(format!("grid.{key}"), format!("`{v}`: {e}"))
                            })
                    }
                    _ => v.parse::<f64>().map(AxisValue::Number).map_err(|_| {
                        ConfigError::field(format!("grid.{key}"), format!("`{v}` is not a number"))
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            axes.push((axis, values));
        }
        Ok(Grid { axes })
    }
}

impl Grid {
    /// Cross product, first axis slowest.
    pub fn cells(&self) -> Vec<Vec<(Axis, AxisValue)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut cells: Vec<Vec<(Axis, AxisValue)>> = vec![Vec::new()];
        for (axis, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((*axis, v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

/// Applies one cell's settings on top of the base configuration.
pub fn apply_cell(base: &ExperimentConfig, cell: &[(Axis, AxisValue)]) -> ExperimentConfig {
    let mut cfg = base.clone();
    for (axis, value) in cell {
        match (axis, value) {
            (Axis::GammaC, AxisValue::Number(v)) => cfg.zocbf.gamma_c = Some(*v),
            (Axis::Delta, AxisValue::Number(v)) => cfg.zocbf.delta = Some(*v),
            (Axis::Period, AxisValue::Number(v)) => cfg.zocbf.period = Some(*v),
            (Axis::Backend, AxisValue::Backend(b)) => cfg.backend = Some(*b),
            _ => unreachable!("axis values are typed by the parser"),
        }
    }
    cfg
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub index: usize,
    pub config: ExperimentConfig,
    /// Run outcome, or the validation error that prevented the run.
    pub outcome: Result<RunOutcome, ConfigError>,
}

/// Runs every cell, concurrently on the current rayon pool. Results are in
/// cell order.
pub fn run_grid(base: &ExperimentConfig, grid: &Grid) -> Vec<CellResult> {
    grid.cells()
        .into_par_iter()
        .enumerate()
        .map(|(index, cell)| {
            let config = apply_cell(base, &cell);
            let outcome = config.resolve().map(|r| execute(&r));
            CellResult {
                index,
                config,
                outcome,
            }
        })
        .collect()
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "cell",
    "gamma_c",
    "delta",
    "period",
    "backend",
    "min_h",
    "first_violation",
    "interventions",
    "max_intervention",
    "mean_solve_time",
    "infeasible_steps",
    "error",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One summary row per cell. Axis columns show the cell's effective
/// setting when resolvable; `error` holds a validation or runtime failure.
pub fn write_table<W: Write>(out: W, results: &[CellResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in results {
        let resolved = r.config.resolve().ok();
        let mut row = vec![
            r.index.to_string(),
            opt(resolved.as_ref().map(|c| c.params.gamma.gamma_c())),
            opt(resolved.as_ref().map(|c| c.params.delta)),
            opt(resolved.as_ref().map(|c| c.params.period)),
            opt(resolved.as_ref().map(|c| c.backend)),
        ];
        match &r.outcome {
            Ok(o) => {
                let min_h = o.report.min_h.iter().copied().fold(f64::INFINITY, f64::min);
                row.extend([
                    min_h.to_string(),
                    opt(o.report.first_violation),
                    o.report.interventions.to_string(),
                    o.report.max_intervention.to_string(),
                    o.report.mean_solve_time.to_string(),
                    o.report.infeasible_steps.to_string(),
                    opt(o
                        .aborted
                        .as_ref()
                        .map(|(step, e)| format!("aborted at step {step}: {e}"))),
                ]);
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
