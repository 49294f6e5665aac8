//! Experiment runner: executes a configured scenario and writes the trace
//! CSV files and `metrics.json` into the output directory.

pub mod config;
pub mod metrics;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{MetricsWindow, Scenario, ScenarioConfig};
pub use metrics::{compute_metrics, RunMetrics, WindowMetrics};

use crate::empc::{run_empc, run_lu, LoopConfig};
use crate::error::{Error, Result};
use crate::model::CouplingMatrices;
use crate::trace::{write_csv, TraceRecord};

/// One closed-loop run of a scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub trace: Vec<TraceRecord>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMetrics {
    pub name: String,
    pub trace_file: String,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

/// Content of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub scenario: Scenario,
    pub n_links: usize,
    pub horizon: usize,
    pub stopping_horizon: usize,
    pub gamma: f64,
    pub total_steps: usize,
    pub window: MetricsWindow,
    pub runs: Vec<NamedMetrics>,
}

fn trace_file_name(name: &str, single: bool) -> String {
    if single {
        "trace.csv".to_string()
    } else {
        format!("trace_{name}.csv")
    }
}

/// Runs the closed loop(s) of `cfg` without touching the filesystem.
pub fn execute(cfg: &ScenarioConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let params = cfg.robot;
    let mats = CouplingMatrices::new(params.n_links)?;
    let x0 = cfg.initial_state()?;
    let c = cfg.constraints;
    let window = cfg.window();
    let steps = cfg.steps();
    let loop_config = |fault| LoopConfig {
        total_steps: steps,
        horizon: cfg.horizon,
        gamma: cfg.gamma,
        fault,
        solver: cfg.solver,
    };
    let finish = |name: &str, trace: Vec<TraceRecord>, is_lu: bool| -> Result<RunOutput> {
        let metrics = metrics::run_metrics(&trace, window, params.ts, cfg.v_tilde, is_lu)?;
        Ok(RunOutput {
            name: name.to_string(),
            trace,
            metrics,
        })
    };

    match cfg.scenario {
        Scenario::Lu => {
            let trace = run_lu(&x0, steps, &cfg.lu, &params, &mats, &c)?;
            Ok(vec![finish("lu", trace, true)?])
        }
        Scenario::Empc => {
            let fault = cfg.fault_enabled.then(|| cfg.fault(cfg.fault_aware));
            let trace = run_empc(&x0, &loop_config(fault), &params, &mats, &c)?;
            Ok(vec![finish("empc", trace, false)?])
        }
        Scenario::FaultCompare => {
            let aware_cfg = loop_config(Some(cfg.fault(true)));
            let unaware_cfg = loop_config(Some(cfg.fault(false)));
            let (aware, unaware) = std::thread::scope(|s| {
                let a = s.spawn(|| run_empc(&x0, &aware_cfg, &params, &mats, &c));
                let u = s.spawn(|| run_empc(&x0, &unaware_cfg, &params, &mats, &c));
                (
                    a.join().expect("fault-aware run panicked"),
                    u.join().expect("fault-unaware run panicked"),
                )
            });
            Ok(vec![
                finish("fault_aware", aware?, false)?,
                finish("fault_unaware", unaware?, false)?,
            ])
        }
    }
}

pub fn metrics_file(cfg: &ScenarioConfig, runs: &[RunOutput]) -> MetricsFile {
    let single = runs.len() == 1;
    MetricsFile {
        scenario: cfg.scenario,
        n_links: cfg.robot.n_links,
        horizon: cfg.horizon,
        stopping_horizon: cfg.stopping_horizon(),
        gamma: cfg.gamma,
        total_steps: cfg.steps(),
        window: cfg.window(),
        runs: runs
            .iter()
            .map(|r| NamedMetrics {
                name: r.name.clone(),
                trace_file: trace_file_name(&r.name, single),
                metrics: r.metrics.clone(),
            })
            .collect(),
    }
}

/// Writes the trace CSV file(s) and `metrics.json` into `out_dir`.
pub fn write_outputs(cfg: &ScenarioConfig, runs: &[RunOutput], out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let single = runs.len() == 1;
    for r in runs {
        let f = File::create(out_dir.join(trace_file_name(&r.name, single)))?;
        write_csv(BufWriter::new(f), &r.trace)?;
    }
    let path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics_file(cfg, runs))?;
    fs::write(&path, json + "\n")?;
    Ok(path)
}

/// Executes the scenario and writes its outputs to `cfg.output_dir`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunOutput>> {
    let runs = execute(cfg)?;
    write_outputs(cfg, &runs, &cfg.output_dir)?;
    Ok(runs)
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// solver invariant breaches, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::HorizonTooShort { .. }
        | Error::Window { .. }
        | Error::Dimension { .. } => 2,
        Error::InvariantBreach { .. } | Error::InfeasibleWarmStart(_) => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}
