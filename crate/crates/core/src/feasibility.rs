//! Recursive-feasibility machinery.
//!
//! Everything here only looks at the joint double integrators
//! `phi+ = phi + ts v_phi`, `v_phi+ = v_phi + ts u` and their box bounds, so it
//! applies unchanged to any joint count and to any cost.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ConstraintSet, CouplingMatrices, RobotParams, RobotState};
use crate::ocp::{self, FaultMask};

/// Default tolerance for certifying plans built by exact constructions.
pub const CERTIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    /// Previous optimum shifted by one step, completed by the stopping law.
    ShiftedPrevious,
    /// Stopping law over the whole horizon.
    PureStopping,
    /// Per joint either the shifted or the stopping inputs, whichever
    /// certifies. Only needed when the plant departs from the predictor.
    JointwiseRepair,
}

/// A candidate input sequence with its predicted trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    pub inputs: Vec<DVector<f64>>,
    pub source: CandidateSource,
    /// Rollout of `inputs`; one entry longer than `inputs`.
    pub predicted_states: Vec<RobotState>,
}

impl CandidatePlan {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Braking feedback: full deceleration while the joint is faster than one
/// step of braking can absorb, then the exact cancelling input.
pub fn stopping_input(v_phi: &DVector<f64>, c: &ConstraintSet, ts: f64) -> DVector<f64> {
    let threshold = ts * c.u_max;
    v_phi.map(|v| {
        if v.abs() > threshold {
            -v.signum() * c.u_max
        } else {
            -v / ts
        }
    })
}

/// Minimal number of steps that brakes any admissible joint velocity to rest,
/// `ceil(v_phi_max / (ts u_max))`.
pub fn stopping_horizon(c: &ConstraintSet, ts: f64) -> usize {
    (c.v_phi_max / (ts * c.u_max)).ceil() as usize
}

/// Shifts `prev_solution` one step and completes it with the stopping law
/// applied in closed loop along the prediction from `new_initial_state`.
///
/// Entries `1..horizon - b` of the previous solution are kept, the last
/// `b + 1` inputs come from the stopping law.
#[allow(clippy::too_many_arguments)]
pub fn shifted_candidate(
    prev_solution: &[DVector<f64>],
    new_initial_state: &RobotState,
    horizon: usize,
    b: usize,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
    fault_mask: &FaultMask,
) -> Result<CandidatePlan> {
    if horizon <= b {
        return Err(Error::HorizonTooShort {
            horizon,
            stopping_horizon: b,
        });
    }
    crate::error::check_len("previous solution", horizon, prev_solution.len())?;
    new_initial_state.check_dims(params)?;
    crate::error::check_len("fault mask", params.n_joints(), fault_mask.len())?;
    let kept = horizon - b - 1;
    let inputs: Vec<DVector<f64>> = prev_solution[1..=kept].to_vec();
    Ok(complete_with_stopping(
        inputs,
        new_initial_state,
        horizon,
        params,
        mats,
        c,
        fault_mask,
        CandidateSource::ShiftedPrevious,
    ))
}

/// The stopping law over the whole horizon from `initial_state`.
pub fn stopping_plan(
    initial_state: &RobotState,
    horizon: usize,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
    fault_mask: &FaultMask,
) -> Result<CandidatePlan> {
    initial_state.check_dims(params)?;
    crate::error::check_len("fault mask", params.n_joints(), fault_mask.len())?;
    Ok(complete_with_stopping(
        Vec::new(),
        initial_state,
        horizon,
        params,
        mats,
        c,
        fault_mask,
        CandidateSource::PureStopping,
    ))
}

#[allow(clippy::too_many_arguments)]
fn complete_with_stopping(
    mut inputs: Vec<DVector<f64>>,
    initial_state: &RobotState,
    horizon: usize,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
    fault_mask: &FaultMask,
    source: CandidateSource,
) -> CandidatePlan {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut x = initial_state.clone();
    fault_mask.pin_state(&mut x);
    for k in 0..horizon {
        let mut u = if k < inputs.len() {
            inputs[k].clone()
        } else {
            let u = stopping_input(&x.v_phi, c, params.ts);
            inputs.push(u.clone());
            u
        };
        fault_mask.pin_input(&mut u);
        let next = model::step_unchecked(&x, &u, params, mats);
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    CandidatePlan {
        inputs,
        source,
        predicted_states: states,
    }
}

/// Which part of a plan broke a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Input,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Step index into `inputs` or `predicted_states`.
    pub index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub feasible: bool,
    pub first_violation: Option<Violation>,
    pub max_input_violation: f64,
    pub max_state_violation: f64,
}

/// Checks every input and every predicted state of `plan` against the boxes.
/// Input violations are reported before state violations.
pub fn certify(plan: &CandidatePlan, c: &ConstraintSet, tol: f64) -> CertificationReport {
    let mut first_input = None;
    let mut max_input = 0.0_f64;
    for (k, u) in plan.inputs.iter().enumerate() {
        let v = model::input_violation(u, c);
        if v > tol && first_input.is_none() {
            first_input = Some(Violation {
                kind: ViolationKind::Input,
                index: k,
                magnitude: v,
            });
        }
        max_input = max_input.max(v);
    }
    let mut first_state = None;
    let mut max_state = 0.0_f64;
    for (k, x) in plan.predicted_states.iter().enumerate() {
        let (ok, v) = model::in_state_set(x, c, tol);
        if !ok && first_state.is_none() {
            first_state = Some(Violation {
                kind: ViolationKind::State,
                index: k,
                magnitude: v,
            });
        }
        max_state = max_state.max(v);
    }
    let first_violation = first_input.or(first_state);
    CertificationReport {
        feasible: first_violation.is_none(),
        first_violation,
        max_input_violation: max_input,
        max_state_violation: max_state,
    }
}

/// Merges two plans joint by joint: joints whose own trajectory in `primary`
/// stays inside the boxes keep those inputs, the rest take them from
/// `fallback`. The joint double integrators are decoupled, so each joint's
/// `(phi, v_phi)` trajectory in the result equals the one in its source plan.
#[allow(clippy::too_many_arguments)]
pub fn jointwise_merge(
    primary: &CandidatePlan,
    fallback: &CandidatePlan,
    initial_state: &RobotState,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
    fault_mask: &FaultMask,
    tol: f64,
) -> Result<CandidatePlan> {
    crate::error::check_len("fallback horizon", primary.horizon(), fallback.horizon())?;
    let nj = params.n_joints();
    let joint_ok = |j: usize| {
        primary.inputs.iter().all(|u| u[j].abs() <= c.u_max + tol)
            && primary
                .predicted_states
                .iter()
                .all(|x| x.phi[j].abs() <= c.phi_max + tol && x.v_phi[j].abs() <= c.v_phi_max + tol)
    };
    let keep: Vec<bool> = (0..nj).map(joint_ok).collect();
    let inputs: Vec<DVector<f64>> = primary
        .inputs
        .iter()
        .zip(&fallback.inputs)
        .map(|(p, f)| DVector::from_fn(nj, |j, _| if keep[j] { p[j] } else { f[j] }))
        .collect();
    let predicted_states = ocp::rollout(initial_state, &inputs, params, mats, fault_mask)?;
    Ok(CandidatePlan {
        inputs,
        source: CandidateSource::JointwiseRepair,
        predicted_states,
    })
}
