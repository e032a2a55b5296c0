//! Trajectory CSV logs and JSON summaries.
//!
//! One CSV row per sampling step `k`:
//!
//! | column | meaning |
//! |---|---|
//! | `time` | `t_k` |
//! | `period` | `T` |
//! | `x<i>` | state at `t_k` |
//! | `u<i>` | applied input over `[t_k, t_{k+1})` |
//! | `u_nom<i>` | nominal input |
//! | `margin_<h>` | `h(x_{k+1}, u_k) - threshold(h(x_k, u_{k-1}))` |
//! | `filter_margin` | worst margin in the backend's own model |
//! | `status` | 0 optimal, 1 feasible suboptimal, 2 infeasible |
//! | `solve_time` | filter wall time in seconds |
//! | `<h>@<j>` | `h` at `t_k + jT/N`, `j = 0..=N` |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;
use zocbf::{
    safety_report, Input, SafetyReport, SimulationLog, SolveStatus, SolverStats, State, ZocbfParams,
};

use crate::config::ExperimentConfig;
use crate::experiment::RunOutcome;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, message: impl ToString) -> OutputError {
    OutputError::Csv {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn status_code(s: SolveStatus) -> u8 {
    match s {
        SolveStatus::Optimal => 0,
        SolveStatus::FeasibleSuboptimal => 1,
        SolveStatus::Infeasible => 2,
    }
}

fn status_from_code(code: f64) -> Option<SolveStatus> {
    [
        SolveStatus::Optimal,
        SolveStatus::FeasibleSuboptimal,
        SolveStatus::Infeasible,
    ]
    .into_iter()
    .find(|s| f64::from(status_code(*s)) == code)
}

/// Column names for a log with the given dimensions.
pub fn header(names: &[String], n: usize, m: usize, substeps: usize) -> Vec<String> {
    let mut cols = vec!["time".to_string(), "period".to_string()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.extend((0..m).map(|i| format!("u_nom{i}")));
    cols.extend(names.iter().map(|h| format!("margin_{h}")));
    cols.extend(["filter_margin", "status", "solve_time"].map(String::from));
    for h in names {
        cols.extend((0..=substeps).map(|j| format!("{h}@{j}")));
    }
    cols
}

/// Writes the trajectory table. Constraint names must not contain `@`.
pub fn write_log<W: Write>(out: W, log: &SimulationLog, params: &ZocbfParams) -> csv::Result<()> {
    let n = log.states.first().map_or(0, |x| x.len());
    let m = log.inputs.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&log.constraint_names, n, m, log.substeps))?;
    for k in 0..log.steps() {
        let mut row: Vec<f64> = vec![log.times[k], log.period];
        row.extend(log.states[k].iter());
        row.extend(log.inputs[k].iter());
        row.extend(log.nominal[k].iter());
        for i in 0..log.constraint_names.len() {
            let margin = match (log.sampled_h.get(k), log.sampled_h.get(k + 1)) {
                (Some(prev), Some(next)) => next[i] - params.threshold(prev[i]),
                _ => f64::NAN,
            };
            row.push(margin);
        }
        row.push(log.filter_margins[k]);
        row.push(f64::from(status_code(log.status[k])));
        row.push(log.stats[k].wall_time);
        for i in 0..log.constraint_names.len() {
            row.extend(log.fine_h[k][i].iter());
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON form of [`SafetyReport`]; non-finite minima become `null`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ReportJson {
    pub steps: usize,
    pub min_h: BTreeMap<String, Option<f64>>,
    pub first_violation: Option<f64>,
    pub interventions: usize,
    pub max_intervention: f64,
    pub mean_solve_time: f64,
    pub infeasible_steps: usize,
    pub safe: bool,
}

impl ReportJson {
    pub fn new(names: &[String], r: &SafetyReport) -> Self {
        Self {
            steps: r.steps,
            min_h: names
                .iter()
                .cloned()
                .zip(r.min_h.iter().map(|v| v.is_finite().then_some(*v)))
                .collect(),
            first_violation: r.first_violation,
            interventions: r.interventions,
            max_intervention: r.max_intervention,
            mean_solve_time: r.mean_solve_time,
            infeasible_steps: r.infeasible_steps,
            safe: r.is_safe(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aborted {
    pub step: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub report: ReportJson,
    pub aborted: Option<Aborted>,
}

impl<'a> Summary<'a> {
    pub fn new(config: &'a ExperimentConfig, outcome: &RunOutcome) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            config,
            report: ReportJson::new(&outcome.log.constraint_names, &outcome.report),
            aborted: outcome.aborted.as_ref().map(|(step, error)| Aborted {
                step: *step,
                error: error.clone(),
            }),
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, creating it if needed.
pub fn write_run(
    dir: &Path,
    stem: &str,
    config: &ExperimentConfig,
    params: &ZocbfParams,
    outcome: &RunOutcome,
) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_log(io::BufWriter::new(file), &outcome.log, params).map_err(|e| csv_err(&csv_path, e))?;

    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&Summary::new(config, outcome))
        .expect("summary is serializable");
    std::fs::write(&json_path, text + "\n").map_err(io_err(&json_path))
}

/// Reads a trajectory log back into the parts of a [`SimulationLog`] that
/// [`safety_report`] needs and recomputes the report.
pub fn report_from_csv<R: Read>(
    input: R,
    path: &Path,
    tolerance: f64,
) -> Result<ReportJson, OutputError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let find = |name: &str| header.iter().position(|c| c == name);
    let prefixed = |prefix: &str| -> Vec<usize> {
        header
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.strip_prefix(prefix)
                    .is_some_and(|d| d.parse::<usize>().is_ok())
            })
            .map(|(i, _)| i)
            .collect()
    };
    let missing = |name: &str| csv_err(path, format!("missing column `{name}`"));
    let time = find("time").ok_or_else(|| missing("time"))?;
    let period = find("period").ok_or_else(|| missing("period"))?;
    let status = find("status").ok_or_else(|| missing("status"))?;
    let solve_time = find("solve_time").ok_or_else(|| missing("solve_time"))?;
    let (u_cols, nom_cols) = (prefixed("u"), prefixed("u_nom"));
    if u_cols.len() != nom_cols.len() {
        return Err(csv_err(path, "input and nominal columns differ in number"));
    }

    // Fine-grid columns `<h>@<j>`, grouped by constraint in order of appearance.
    let mut names: Vec<String> = Vec::new();
    let mut fine: Vec<Vec<usize>> = Vec::new();
    for (c, col) in header.iter().enumerate() {
        if let Some((h, j)) = col.rsplit_once('@') {
            let j: usize = j
                .parse()
                .map_err(|_| csv_err(path, format!("bad column `{col}`")))?;
            let i = match names.iter().position(|n| n == h) {
                Some(i) => i,
                None => {
                    names.push(h.to_string());
                    fine.push(Vec::new());
                    names.len() - 1
                }
            };
            if j != fine[i].len() {
                return Err(csv_err(path, format!("column `{col}` out of order")));
            }
            fine[i].push(c);
        }
    }
    let points = fine.first().map_or(0, Vec::len);
    if points < 2 || fine.iter().any(|f| f.len() != points) {
        return Err(csv_err(
            path,
            "fine-grid columns must cover j = 0..=N for every constraint",
        ));
    }

    let mut log = SimulationLog {
        constraint_names: names,
        substeps: points - 1,
        ..SimulationLog::default()
    };
    for (r, record) in rd.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(csv_err(
                path,
                format!("row {} has {} fields", r + 1, record.len()),
            ));
        }
        let row: Vec<f64> = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| csv_err(path, format!("row {} is not numeric", r + 1)))?;
        log.period = row[period];
        log.times.push(row[time]);
        log.states.push(State::zeros(0));
        log.inputs.push(Input::from_iterator(
            u_cols.len(),
            u_cols.iter().map(|&c| row[c]),
        ));
        log.nominal.push(Input::from_iterator(
            nom_cols.len(),
            nom_cols.iter().map(|&c| row[c]),
        ));
        log.status.push(
            status_from_code(row[status])
                .ok_or_else(|| csv_err(path, format!("row {} has a bad status", r + 1)))?,
        );
        log.stats.push(SolverStats {
            wall_time: row[solve_time],
            ..SolverStats::default()
        });
        log.fine_h.push(
            fine.iter()
                .map(|cols| cols.iter().map(|&c| row[c]).collect())
                .collect(),
        );
    }
    let report = safety_report(&log, tolerance);
    Ok(ReportJson::new(&log.constraint_names, &report))
}
