use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use zocbf::FilterBackend;
use zocbf_cli::config::{ConfigError, ExperimentConfig};
use zocbf_cli::output::{report_from_csv, write_run};
use zocbf_cli::sweep::{run_grid, write_table, Grid};
use zocbf_cli::{execute, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_UNSAFE};

#[derive(Parser)]
#[command(
    name = "zocbf",
    version,
    about = "Sampled-data ZOCBF safety-filter experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `<name>.csv` and `<name>.json`.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a parameter grid and write `sweep.csv`.
    Sweep {
        config: PathBuf,
        /// Axes `key=v1,v2` separated by `;`; keys gamma_c, delta, period, backend.
        #[arg(long)]
        grid: String,
        /// Also write the trajectory log and summary of every cell.
        #[arg(long)]
        cell_logs: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute the safety summary of a trajectory log.
    Report {
        log: PathBuf,
        /// Deviation from the nominal input counted as an intervention.
        #[arg(long, default_value_t = 1e-6)]
        intervention_tol: f64,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// For example `linearized_linear`, `rk_nonlinear:4` or `sampling:401`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    substeps: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = Some(dir.clone());
        }
        if let Some(b) = &self.backend {
            let backend = FilterBackend::from_str(b)
                .map_err(|e| ConfigError::field("backend", e.to_string()))?;
            cfg.backend = Some(backend);
        }
        if let Some(k) = self.steps {
            cfg.run.steps = Some(k);
        }
        if let Some(n) = self.substeps {
            cfg.run.substeps = Some(n);
        }
        Ok(())
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn configure_pool() -> Result<(), String> {
    let Ok(value) = std::env::var("ZOCBF_WORKERS") else {
        return Ok(());
    };
    let workers: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|w| *w > 0)
        .ok_or_else(|| format!("ZOCBF_WORKERS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(config: PathBuf, overrides: Overrides) -> u8 {
    let cfg = match load(&config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let outcome = execute(&resolved);
    if let Err(e) = write_run(
        &resolved.out_dir,
        &resolved.name,
        &cfg,
        &resolved.params,
        &outcome,
    ) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    let r = &outcome.report;
    for (name, min) in outcome.log.constraint_names.iter().zip(&r.min_h) {
        println!("min {name}: {min:.6e}");
    }
    match r.first_violation {
        Some(t) => println!("first violation: {t:.4} s"),
        None => println!("first violation: none"),
    }
    println!("infeasible steps: {}", r.infeasible_steps);
    println!(
        "interventions: {} (max {:.4e})",
        r.interventions, r.max_intervention
    );
    let stem = resolved.out_dir.join(&resolved.name);
    println!("wrote {}.csv and {}.json", stem.display(), stem.display());
    if let Some((step, e)) = &outcome.aborted {
        eprintln!("error: simulation aborted at step {step}: {e}");
        return EXIT_RUNTIME;
    }
    if outcome.passed() {
        EXIT_OK
    } else {
        EXIT_UNSAFE
    }
}

fn sweep(config: PathBuf, grid: String, cell_logs: bool, overrides: Overrides) -> u8 {
    let (cfg, grid) = match load(&config, &overrides).and_then(|c| Ok((c, Grid::from_str(&grid)?)))
    {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let out_dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let stem = cfg
        .output
        .name
        .clone()
        .unwrap_or_else(|| cfg.model.to_string());
    let results = run_grid(&cfg, &grid);
    let written = std::fs::create_dir_all(&out_dir)
        .map_err(|e| e.to_string())
        .and_then(|()| File::create(out_dir.join("sweep.csv")).map_err(|e| e.to_string()))
        .and_then(|f| write_table(f, &results).map_err(|e| e.to_string()));
    if let Err(e) = written {
        eprintln!(
            "error: writing {}: {e}",
            out_dir.join("sweep.csv").display()
        );
        return EXIT_RUNTIME;
    }
    if cell_logs {
        for r in &results {
            if let (Ok(outcome), Ok(resolved)) = (&r.outcome, r.config.resolve()) {
                let name = format!("{stem}_cell{:03}", r.index);
                if let Err(e) = write_run(&out_dir, &name, &r.config, &resolved.params, outcome) {
                    eprintln!("error: {e}");
                    return EXIT_RUNTIME;
                }
            }
        }
    }
    println!(
        "{} cells written to {}",
        results.len(),
        out_dir.join("sweep.csv").display()
    );
    EXIT_OK
}

fn report(log: PathBuf, tolerance: f64) -> u8 {
    let report = File::open(&log)
        .map_err(|e| format!("cannot read {}: {e}", log.display()))
        .and_then(|f| report_from_csv(f, &log, tolerance).map_err(|e| e.to_string()));
    match report {
        Ok(r) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("report is serializable")
            );
            if r.safe && r.infeasible_steps == 0 {
                EXIT_OK
            } else {
                EXIT_UNSAFE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let code = match cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Sweep {
            config,
            grid,
            cell_logs,
            overrides,
        } => sweep(config, grid, cell_logs, overrides),
        Command::Report {
            log,
            intervention_tol,
        } => report(log, intervention_tol),
    };
    ExitCode::from(code)
}
