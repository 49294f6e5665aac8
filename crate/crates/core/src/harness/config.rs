//! Flat `key = value` scenario configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys are errors. Every key is optional; missing keys take the defaults
//! printed by [`ScenarioConfig::render`] on `ScenarioConfig::default()`.
//! Vector values are comma separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::empc::FaultConfig;
use crate::error::{Error, Result};
use crate::feasibility::stopping_horizon;
use crate::gait::LuParams;
use crate::model::{ConstraintSet, RobotParams, RobotState};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Lu,
    Empc,
    FaultCompare,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Lu => "lu",
            Scenario::Empc => "empc",
            Scenario::FaultCompare => "fault_compare",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lu" => Ok(Scenario::Lu),
            "empc" => Ok(Scenario::Empc),
            "fault_compare" => Ok(Scenario::FaultCompare),
            other => Err(format!(
                "unknown scenario '{other}' (expected lu, empc or fault_compare)"
            )),
        }
    }
}

/// Inclusive step window for the averaged metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub start_step: usize,
    pub end_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub gamma: f64,
    /// `None` resolves to 300, or 500 for `fault_compare`.
    pub total_steps: Option<usize>,
    /// Reserved; every run is deterministic.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub robot: RobotParams,
    pub constraints: ConstraintSet,
    pub lu: LuParams,
    pub solver: SolverConfig,
    pub horizon: usize,
    pub phi_init: Option<Vec<f64>>,
    pub v_phi_init: Option<Vec<f64>>,
    pub v_t_init: f64,
    pub v_n_init: f64,
    /// `None` resolves to 100..=300, or 300..=500 for `fault_compare`.
    pub metrics_window: Option<MetricsWindow>,
    /// One-based joint that blocks.
    pub fault_joint: usize,
    pub fault_step: usize,
    /// Fault injection for the single `empc` scenario.
    pub fault_enabled: bool,
    pub fault_aware: bool,
    /// Benchmark forward velocity for the invariance monitor (m/s).
    pub v_tilde: f64,
}

/// Joint distances of the reference experiment's initial shape.
pub const DEFAULT_PHI_INIT: [f64; 8] = [0.0, 0.01, -0.01, 0.01, 0.0, 0.0, 0.01, -0.01];

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Empc,
            gamma: 0.0,
            total_steps: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            robot: RobotParams::default(),
            constraints: ConstraintSet::default(),
            lu: LuParams::default(),
            solver: SolverConfig::default(),
            horizon: 20,
            phi_init: None,
            v_phi_init: None,
            v_t_init: 0.0,
            v_n_init: 0.0,
            metrics_window: None,
            fault_joint: 4,
            fault_step: 200,
            fault_enabled: false,
            fault_aware: true,
            v_tilde: 0.05,
        }
    }
}

fn parse_value<T: FromStr>(raw: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| format!("cannot parse '{raw}': {e}"))
}

fn parse_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|s| parse_value::<f64>(s.trim()))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses `text`; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let err = |line: usize, msg: String| Error::Config {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| err(line_no, msg))?;
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter(msg) => {
                Error::InvalidParameter(format!("{}: {msg}", origin.display()))
            }
            other => other,
        })?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "scenario" => self.scenario = value.parse()?,
            "gamma" => self.gamma = parse_value(value)?,
            "total_steps" => self.total_steps = Some(parse_value(value)?),
            "seed" => self.seed = parse_value(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "n_links" => self.robot.n_links = parse_value(value)?,
            "mass" => self.robot.mass = parse_value(value)?,
            "link_length" => self.robot.link_length = parse_value(value)?,
            "c_n" => self.robot.c_n = parse_value(value)?,
            "c_t" => self.robot.c_t = parse_value(value)?,
            "lambda1" => self.robot.lambda1 = parse_value(value)?,
            "lambda2" => self.robot.lambda2 = parse_value(value)?,
            "ts" => self.robot.ts = parse_value(value)?,
            "horizon" => self.horizon = parse_value(value)?,
            "phi_max" => self.constraints.phi_max = parse_value(value)?,
            "v_phi_max" => self.constraints.v_phi_max = parse_value(value)?,
            "u_max" => self.constraints.u_max = parse_value(value)?,
            "alpha" => self.lu.alpha = parse_value(value)?,
            "omega_deg" => self.lu.omega = parse_value::<f64>(value)?.to_radians(),
            "delta_deg" => self.lu.delta = parse_value::<f64>(value)?.to_radians(),
            "phi0" => self.lu.phi0 = parse_value(value)?,
            "k_d" => self.lu.k_d = parse_value(value)?,
            "k_p" => self.lu.k_p = parse_value(value)?,
            "max_outer_iters" => self.solver.max_outer_iters = parse_value(value)?,
            "max_inner_iters" => self.solver.max_inner_iters = parse_value(value)?,
            "grad_tol" => self.solver.grad_tol = parse_value(value)?,
            "constraint_tol" => self.solver.constraint_tol = parse_value(value)?,
            "penalty_init" => self.solver.penalty_init = parse_value(value)?,
            "penalty_growth" => self.solver.penalty_growth = parse_value(value)?,
            "fallback_enabled" => self.solver.fallback_enabled = parse_value(value)?,
            "phi_init" => self.phi_init = Some(parse_list(value)?),
            "v_phi_init" => self.v_phi_init = Some(parse_list(value)?),
            "v_t_init" => self.v_t_init = parse_value(value)?,
            "v_n_init" => self.v_n_init = parse_value(value)?,
            "metrics_start" => {
                let mut w = self.window();
                w.start_step = parse_value(value)?;
                self.metrics_window = Some(w);
            }
            "metrics_end" => {
                let mut w = self.window();
                w.end_step = parse_value(value)?;
                self.metrics_window = Some(w);
            }
            "fault_joint" => self.fault_joint = parse_value(value)?,
            "fault_step" => self.fault_step = parse_value(value)?,
            "fault_enabled" => self.fault_enabled = parse_value(value)?,
            "fault_aware" => self.fault_aware = parse_value(value)?,
            "v_tilde" => self.v_tilde = parse_value(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.total_steps.unwrap_or(match self.scenario {
            Scenario::FaultCompare => 500,
            _ => 300,
        })
    }

    pub fn window(&self) -> MetricsWindow {
        self.metrics_window.unwrap_or(match self.scenario {
            Scenario::FaultCompare => MetricsWindow {
                start_step: 300,
                end_step: 500,
            },
            _ => MetricsWindow {
                start_step: 100,
                end_step: 300,
            },
        })
    }

    pub fn stopping_horizon(&self) -> usize {
        stopping_horizon(&self.constraints, self.robot.ts)
    }

    pub fn fault(&self, predictor_aware: bool) -> FaultConfig {
        FaultConfig {
            joint: self.fault_joint,
            onset_step: self.fault_step,
            predictor_aware,
        }
    }

    pub fn initial_state(&self) -> Result<RobotState> {
        let nj = self.robot.n_joints();
        let mut x = RobotState::zeros(nj);
        let phi = match &self.phi_init {
            Some(v) => v.clone(),
            None if nj == DEFAULT_PHI_INIT.len() => DEFAULT_PHI_INIT.to_vec(),
            None => vec![0.0; nj],
        };
        crate::error::check_len("phi_init", nj, phi.len())?;
        x.phi = DVector::from_vec(phi);
        if let Some(v) = &self.v_phi_init {
            crate::error::check_len("v_phi_init", nj, v.len())?;
            x.v_phi = DVector::from_column_slice(v);
        }
        x.v_t = self.v_t_init;
        x.v_n = self.v_n_init;
        Ok(x)
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.constraints.validate()?;
        self.lu.validate()?;
        self.solver.validate()?;
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.steps() < 1 {
            return Err(Error::InvalidParameter("total_steps must be >= 1".into()));
        }
        let w = self.window();
        if w.start_step >= w.end_step || w.end_step > self.steps() {
            return Err(Error::InvalidParameter(format!(
                "metrics window {}..={} must satisfy start < end <= total_steps = {}",
                w.start_step,
                w.end_step,
                self.steps()
            )));
        }
        let fault_used = self.fault_enabled || self.scenario == Scenario::FaultCompare;
        if fault_used && (self.fault_joint < 1 || self.fault_joint > self.robot.n_joints()) {
            return Err(Error::InvalidParameter(format!(
                "fault_joint must be in 1..={}, got {}",
                self.robot.n_joints(),
                self.fault_joint
            )));
        }
        self.initial_state()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(())
    }

    /// The configuration in the file format, every key spelled out.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let r = &self.robot;
        let c = &self.constraints;
        let lu = &self.lu;
        let sv = &self.solver;
        let w = self.window();
        let x0 = self.initial_state().ok();
        let phi = x0
            .as_ref()
            .map(|x| fmt_list(x.phi.as_slice()))
            .unwrap_or_default();
        let vphi = x0
            .as_ref()
            .map(|x| fmt_list(x.v_phi.as_slice()))
            .unwrap_or_default();
        let _ = writeln!(s, "# scenario");
        let _ = writeln!(s, "scenario = {}", self.scenario.as_str());
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "total_steps = {}", self.steps());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "metrics_start = {}", w.start_step);
        let _ = writeln!(s, "metrics_end = {}", w.end_step);
        let _ = writeln!(s, "v_tilde = {}", self.v_tilde);
        let _ = writeln!(s, "\n# robot");
        let _ = writeln!(s, "n_links = {}", r.n_links);
        let _ = writeln!(s, "mass = {}", r.mass);
        let _ = writeln!(s, "link_length = {}", r.link_length);
        let _ = writeln!(s, "c_n = {}", r.c_n);
        let _ = writeln!(s, "c_t = {}", r.c_t);
        let _ = writeln!(s, "lambda1 = {}", r.lambda1);
        let _ = writeln!(s, "lambda2 = {}", r.lambda2);
        let _ = writeln!(s, "ts = {}", r.ts);
        let _ = writeln!(s, "\n# initial state");
        let _ = writeln!(s, "phi_init = {phi}");
        let _ = writeln!(s, "v_phi_init = {vphi}");
        let _ = writeln!(s, "v_t_init = {}", self.v_t_init);
        let _ = writeln!(s, "v_n_init = {}", self.v_n_init);
        let _ = writeln!(s, "\n# constraints");
        let _ = writeln!(s, "phi_max = {}", c.phi_max);
        let _ = writeln!(s, "v_phi_max = {}", c.v_phi_max);
        let _ = writeln!(s, "u_max = {}", c.u_max);
        let _ = writeln!(
            s,
            "\n# economic MPC (stopping horizon b = {})",
            self.stopping_horizon()
        );
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "max_outer_iters = {}", sv.max_outer_iters);
        let _ = writeln!(s, "max_inner_iters = {}", sv.max_inner_iters);
        let _ = writeln!(s, "grad_tol = {:e}", sv.grad_tol);
        let _ = writeln!(s, "constraint_tol = {:e}", sv.constraint_tol);
        let _ = writeln!(s, "penalty_init = {}", sv.penalty_init);
        let _ = writeln!(s, "penalty_growth = {}", sv.penalty_growth);
        let _ = writeln!(s, "fallback_enabled = {}", sv.fallback_enabled);
        let _ = writeln!(s, "\n# lateral undulation");
        let _ = writeln!(s, "alpha = {}", lu.alpha);
        let _ = writeln!(s, "omega_deg = {}", round_deg(lu.omega));
        let _ = writeln!(s, "delta_deg = {}", round_deg(lu.delta));
        let _ = writeln!(s, "phi0 = {}", lu.phi0);
        let _ = writeln!(s, "k_d = {}", lu.k_d);
        let _ = writeln!(s, "k_p = {}", lu.k_p);
        let _ = writeln!(s, "\n# actuator fault");
        let _ = writeln!(s, "fault_enabled = {}", self.fault_enabled);
        let _ = writeln!(s, "fault_joint = {}", self.fault_joint);
        let _ = writeln!(s, "fault_step = {}", self.fault_step);
        let _ = writeln!(s, "fault_aware = {}", self.fault_aware);
        s
    }
}

fn round_deg(rad: f64) -> f64 {
    (rad.to_degrees() * 1e9).round() / 1e9
}
