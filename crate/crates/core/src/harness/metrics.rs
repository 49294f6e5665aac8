use serde::{Deserialize, Serialize};

use super::config::MetricsWindow;
use crate::error::{Error, Result};
use crate::monitor::{self, AccelerationCheck, PerfReport};
use crate::ocp::SolveStatus;
use crate::trace::TraceRecord;

/// Windowed averages of forward velocity and input energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    /// `sum_{t=start}^{end} v_t(t) / (end - start)`.
    pub v_av: f64,
    /// `sum_{t=start}^{end} u(t)^T u(t) / (end - start)`.
    pub energy: f64,
    /// Same sums divided by the sample count `end - start + 1`.
    pub v_av_mean: f64,
    pub energy_mean: f64,
}

/// Averages over the inclusive window, divided by the window length
/// `end - start` (one less than the number of samples), which is how the
/// reference numbers were reported.
pub fn compute_metrics(trace: &[TraceRecord], window: MetricsWindow) -> Result<WindowMetrics> {
    let MetricsWindow {
        start_step: start,
        end_step: end,
    } = window;
    if start >= end || end >= trace.len() {
        return Err(Error::Window {
            start,
            end,
            len: trace.len(),
        });
    }
    let rows = &trace[start..=end];
    let v_sum: f64 = rows.iter().map(|r| r.state.v_t).sum();
    let e_sum: f64 = rows.iter().map(|r| r.input.norm_squared()).sum();
    let span = (end - start) as f64;
    let samples = span + 1.0;
    Ok(WindowMetrics {
        v_av: v_sum / span,
        energy: e_sum / span,
        v_av_mean: v_sum / samples,
        energy_mean: e_sum / samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub first_violation_step: Option<usize>,
    pub worst_violation: f64,
    pub worst_violation_step: usize,
}

/// Steps whose recorded violation exceeds `tol`.
pub fn violation_summary(trace: &[TraceRecord], tol: f64) -> ViolationSummary {
    let first_violation_step = trace.iter().find(|r| r.violation > tol).map(|r| r.step);
    let (worst_violation_step, worst_violation) =
        trace
            .iter()
            .map(|r| (r.step, r.violation))
            .fold(
                (0, 0.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
    ViolationSummary {
        first_violation_step,
        worst_violation,
        worst_violation_step,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub converged: usize,
    pub max_iter: usize,
    pub fell_back: usize,
    pub total_iterations: usize,
    /// Steps whose warm start needed the joint-wise repair.
    pub warm_start_repairs: usize,
}

pub fn solver_summary(trace: &[TraceRecord]) -> SolverSummary {
    let count = |s: SolveStatus| trace.iter().filter(|r| r.status == Some(s)).count();
    SolverSummary {
        solves: trace.iter().filter(|r| r.status.is_some()).count(),
        converged: count(SolveStatus::Converged),
        max_iter: count(SolveStatus::MaxIter),
        fell_back: count(SolveStatus::FellBackToCandidate),
        total_iterations: trace.iter().map(|r| r.iterations).sum(),
        warm_start_repairs: trace
            .iter()
            .filter(|r| r.warm_start == Some(crate::feasibility::CandidateSource::JointwiseRepair))
            .count(),
    }
}

/// Everything reported for one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub window: WindowMetrics,
    pub violations: ViolationSummary,
    pub perf: PerfReport,
    pub acceleration: Option<AccelerationSummary>,
    pub solver: Option<SolverSummary>,
}

/// [`AccelerationCheck`] without the per-step profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationSummary {
    pub v_tilde: f64,
    pub holds: bool,
    pub entry_step: Option<usize>,
    pub worst_growth: f64,
    pub slack: f64,
}

impl AccelerationSummary {
    fn new(check: &AccelerationCheck, v_tilde: f64, slack: f64) -> Self {
        Self {
            v_tilde,
            holds: check.holds,
            entry_step: check.entry_step,
            worst_growth: check.worst_growth,
            slack,
        }
    }
}

/// Violation tolerance used for the summaries.
pub const VIOLATION_TOL: f64 = 1e-9;

pub fn run_metrics(
    trace: &[TraceRecord],
    window: MetricsWindow,
    ts: f64,
    v_tilde: f64,
    is_lu: bool,
) -> Result<RunMetrics> {
    let v_t = monitor::v_t_series(trace);
    let acceleration = is_lu.then(|| {
        let check = monitor::check_acceleration_capability(&v_t, v_tilde, monitor::DEFICIT_SLACK);
        AccelerationSummary::new(&check, v_tilde, monitor::DEFICIT_SLACK)
    });
    Ok(RunMetrics {
        window: compute_metrics(trace, window)?,
        violations: violation_summary(trace, VIOLATION_TOL),
        perf: monitor::check_invariance(&v_t, ts, v_tilde),
        acceleration,
        solver: (!is_lu).then(|| solver_summary(trace)),
    })
}
