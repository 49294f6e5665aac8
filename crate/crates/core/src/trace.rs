//! Closed-loop trace records and their CSV encoding.
//!
//! Row `t` holds the plant state `x(t)` together with the input that drove
//! the plant from `x(t-1)` to `x(t)` and the diagnostics of the solve that
//! produced it. Row 0 carries a zero input placeholder, so a run of `T` steps
//! has `T + 1` rows.
//!
//! CSV columns, in order:
//!
//! ```text
//! step,time_s,phi_1..phi_{N-1},theta,p_x,p_y,v_phi_1..v_phi_{N-1},v_theta,v_t,v_n,
//! u_1..u_{N-1},cost,iterations,status,warm_start,violation
//! ```
//!
//! Floats are written with 17 significant digits; `cost` is empty for rows
//! without a solve, `status` and `warm_start` are `none` there.

use std::io::Write;

use nalgebra::DVector;

use crate::feasibility::CandidateSource;
use crate::model::RobotState;
use crate::ocp::SolveStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub time_s: f64,
    pub state: RobotState,
    /// Input applied over the interval ending at this step.
    pub input: DVector<f64>,
    /// Optimal cost of the solve that produced `input`.
    pub cost: Option<f64>,
    pub iterations: usize,
    pub status: Option<SolveStatus>,
    pub warm_start: Option<CandidateSource>,
    /// Largest box overshoot of `state` and `input`.
    pub violation: f64,
}

pub fn csv_header(n_joints: usize) -> String {
    let mut cols = vec!["step".to_string(), "time_s".to_string()];
    cols.extend((1..=n_joints).map(|i| format!("phi_{i}")));
    cols.extend(["theta", "p_x", "p_y"].map(String::from));
    cols.extend((1..=n_joints).map(|i| format!("v_phi_{i}")));
    cols.extend(["v_theta", "v_t", "v_n"].map(String::from));
    cols.extend((1..=n_joints).map(|i| format!("u_{i}")));
    cols.extend(["cost", "iterations", "status", "warm_start", "violation"].map(String::from));
    cols.join(",")
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn source_name(s: CandidateSource) -> &'static str {
    match s {
        CandidateSource::ShiftedPrevious => "shifted_previous",
        CandidateSource::PureStopping => "pure_stopping",
        CandidateSource::JointwiseRepair => "jointwise_repair",
    }
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string(), fmt_f64(self.time_s)];
        cols.extend(self.state.to_vec().into_iter().map(fmt_f64));
        cols.extend(self.input.iter().copied().map(fmt_f64));
        cols.push(self.cost.map(fmt_f64).unwrap_or_default());
        cols.push(self.iterations.to_string());
        cols.push(self.status.map_or("none", |s| s.as_str()).to_string());
        cols.push(self.warm_start.map_or("none", source_name).to_string());
        cols.push(fmt_f64(self.violation));
        cols.join(",")
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    let n_joints = records.first().map_or(0, |r| r.state.n_joints());
    writeln!(out, "{}", csv_header(n_joints))?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}
