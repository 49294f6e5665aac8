//! Empirical performance monitors evaluated on closed-loop forward-velocity
//! traces. These are falsifiable checks on observed data, not proofs.

use serde::{Deserialize, Serialize};

use crate::trace::TraceRecord;

/// Default per-step growth of the velocity deficit tolerated by
/// [`check_acceleration_capability`] (m/s).
pub const DEFICIT_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Benchmark velocity (m/s).
    pub v_tilde: f64,
    /// First step with `v_t >= v_tilde`.
    pub first_entry_step: Option<usize>,
    /// Steps after the first entry where `v_t < v_tilde`, with the velocity.
    pub invariance_violations: Vec<(usize, f64)>,
    /// Largest observed one-step deceleration divided by the sampling time.
    pub epsilon_empirical: f64,
    /// Entered the benchmark set and never left it.
    pub converged: bool,
}

pub fn v_t_series(trace: &[TraceRecord]) -> Vec<f64> {
    trace.iter().map(|r| r.state.v_t).collect()
}

/// Checks forward invariance of `{v_t >= v_tilde}` along the trace.
pub fn check_invariance(v_t: &[f64], ts: f64, v_tilde: f64) -> PerfReport {
    let first_entry_step = v_t.iter().position(|v| *v >= v_tilde);
    let invariance_violations: Vec<(usize, f64)> = match first_entry_step {
        Some(entry) => v_t
            .iter()
            .enumerate()
            .skip(entry + 1)
            .filter(|(_, v)| **v < v_tilde)
            .map(|(t, v)| (t, *v))
            .collect(),
        None => Vec::new(),
    };
    let converged = first_entry_step.is_some() && invariance_violations.is_empty();
    PerfReport {
        v_tilde,
        first_entry_step,
        invariance_violations,
        epsilon_empirical: estimate_epsilon(&[v_t], ts),
        converged,
    }
}

/// `max (v_t(t) - v_t(t+1)) / ts` over all consecutive pairs of all traces.
/// Negative when every observed step accelerates; `-inf` without any pair.
pub fn estimate_epsilon(traces: &[&[f64]], ts: f64) -> f64 {
    traces
        .iter()
        .flat_map(|v| v.windows(2).map(|w| (w[0] - w[1]) / ts))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationCheck {
    pub holds: bool,
    /// First step at which the deficit vanishes.
    pub entry_step: Option<usize>,
    /// `max(0, v_tilde - v_t(t))` for every step.
    pub deficit: Vec<f64>,
    /// Largest one-step growth of the deficit before entry.
    pub worst_growth: f64,
}

/// Checks that the velocity deficit below `v_tilde` decays along a trace
/// (typically the lateral undulation run) until it vanishes, allowing it to
/// grow by at most `slack` between consecutive steps.
pub fn check_acceleration_capability(v_t: &[f64], v_tilde: f64, slack: f64) -> AccelerationCheck {
    let deficit: Vec<f64> = v_t.iter().map(|v| (v_tilde - v).max(0.0)).collect();
    let entry_step = deficit.iter().position(|d| *d == 0.0);
    let end = entry_step.unwrap_or(deficit.len());
    let worst_growth = deficit[..end]
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let holds = entry_step.is_some() && worst_growth <= slack;
    AccelerationCheck {
        holds,
        entry_step,
        deficit,
        worst_growth,
    }
}
