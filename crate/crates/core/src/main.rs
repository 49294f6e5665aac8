use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use snake_empc::harness::{self, Scenario, ScenarioConfig};
use snake_empc::Error;

#[derive(Parser)]
#[command(
    name = "snake-empc",
    version,
    about = "Economic MPC for snake robot locomotion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write trace CSV and metrics.json.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// lu, empc or fault_compare.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Enables a blocked joint from this step on (empc scenario).
    #[arg(long)]
    fault_step: Option<usize>,
    /// One-based joint number of the blocked joint.
    #[arg(long)]
    fault_joint: Option<usize>,
    /// Whether the predictor knows about the fault (empc scenario).
    #[arg(long)]
    fault_aware: Option<bool>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn resolve(args: &SimulateArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(n) = args.steps {
        cfg.total_steps = Some(n);
    }
    if let Some(dir) = &args.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(step) = args.fault_step {
        cfg.fault_step = step;
        cfg.fault_enabled = true;
    }
    if let Some(j) = args.fault_joint {
        cfg.fault_joint = j;
        cfg.fault_enabled = true;
    }
    if let Some(a) = args.fault_aware {
        cfg.fault_aware = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let cfg = resolve(&args)?;
    if args.print_defaults {
        print!("{}", cfg.render());
        return Ok(());
    }
    let started = Instant::now();
    let runs = harness::run_scenario(&cfg)?;
    for r in &runs {
        let w = &r.metrics.window;
        println!(
            "{:<14} v_av = {:.4} m/s  E = {:.4}  worst violation = {:.3e}",
            r.name, w.v_av, w.energy, r.metrics.violations.worst_violation
        );
    }
    eprintln!(
        "wrote {} in {:.1} s",
        cfg.output_dir.join("metrics.json").display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
