//! Closed-loop controllers: the economic MPC loop and the lateral undulation
//! baseline.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{
    certify, jointwise_merge, shifted_candidate, stopping_horizon, stopping_plan, CandidatePlan,
    CandidateSource, CERTIFY_TOL,
};
use crate::gait::{lu_control, LuParams};
use crate::model::{self, ConstraintSet, CouplingMatrices, RobotParams, RobotState};
use crate::ocp::{self, FaultMask, OcpSpec};
use crate::solver::{solve, SolverConfig};
use crate::trace::TraceRecord;

/// A blocked actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// One-based joint number.
    pub joint: usize,
    /// First step at which the joint is blocked.
    pub onset_step: usize,
    /// Whether the predictor knows about the fault once it is active.
    pub predictor_aware: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub total_steps: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub fault: Option<FaultConfig>,
    pub solver: SolverConfig,
}

impl LoopConfig {
    pub fn validate(&self, params: &RobotParams, c: &ConstraintSet) -> Result<()> {
        if self.total_steps < 1 {
            return Err(Error::InvalidParameter("total_steps must be >= 1".into()));
        }
        let b = stopping_horizon(c, params.ts);
        if self.horizon <= b {
            return Err(Error::HorizonTooShort {
                horizon: self.horizon,
                stopping_horizon: b,
            });
        }
        if let Some(f) = &self.fault {
            if f.joint < 1 || f.joint > params.n_joints() {
                return Err(Error::InvalidParameter(format!(
                    "fault joint {} outside 1..={}",
                    f.joint,
                    params.n_joints()
                )));
            }
        }
        self.solver.validate()
    }
}

fn record(
    step: usize,
    ts: f64,
    state: &RobotState,
    input: DVector<f64>,
    c: &ConstraintSet,
) -> TraceRecord {
    let violation = model::in_state_set(state, c, 0.0)
        .1
        .max(model::input_violation(&input, c));
    TraceRecord {
        step,
        time_s: step as f64 * ts,
        state: state.clone(),
        input,
        cost: None,
        iterations: 0,
        status: None,
        warm_start: None,
        violation,
    }
}

/// Runs the economic MPC loop for `loop_config.total_steps` steps.
///
/// Each step warm-starts the solver from the shifted candidate of the
/// previous solution, solves, and applies the first optimal input. The
/// first step starts from the zero sequence when the joints are at rest and
/// from the stopping plan otherwise.
pub fn run_empc(
    initial_state: &RobotState,
    loop_config: &LoopConfig,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
) -> Result<Vec<TraceRecord>> {
    params.validate()?;
    c.validate()?;
    loop_config.validate(params, c)?;
    initial_state.check_dims(params)?;
    let (feasible, worst) = model::in_state_set(initial_state, c, CERTIFY_TOL);
    if !feasible {
        return Err(Error::InvalidParameter(format!(
            "initial state violates the state box by {worst:e}"
        )));
    }

    let nj = params.n_joints();
    let horizon = loop_config.horizon;
    let b = stopping_horizon(c, params.ts);
    let no_fault = FaultMask::none(nj);
    let plant_fault = loop_config
        .fault
        .map(|f| FaultMask::single(nj, f.joint - 1));
    let fault_active = |t: usize| loop_config.fault.is_some_and(|f| t >= f.onset_step);

    let mut x = initial_state.clone();
    let mut records = Vec::with_capacity(loop_config.total_steps + 1);
    let mut pending = record(0, params.ts, &x, DVector::zeros(nj), c);
    let mut prev: Option<Vec<DVector<f64>>> = None;

    for t in 0..=loop_config.total_steps {
        if fault_active(t) {
            if let Some(mask) = &plant_fault {
                mask.pin_state(&mut x);
            }
            pending.state = x.clone();
            pending.violation = model::in_state_set(&x, c, 0.0)
                .1
                .max(model::input_violation(&pending.input, c));
        }
        records.push(pending.clone());
        if t == loop_config.total_steps {
            break;
        }

        let aware = loop_config.fault.is_some_and(|f| f.predictor_aware);
        let predictor_mask = match &plant_fault {
            Some(mask) if aware && fault_active(t) => mask.clone(),
            _ => no_fault.clone(),
        };

        let mut warm = match &prev {
            Some(prev) => {
                shifted_candidate(prev, &x, horizon, b, params, mats, c, &predictor_mask)?
            }
            None => initial_warm_start(&x, horizon, params, mats, c, &predictor_mask)?,
        };
        if !certify(&warm, c, CERTIFY_TOL).feasible {
            // Only a plant/predictor mismatch can break the shifted candidate.
            if !fault_active(t) {
                return Err(Error::InvariantBreach {
                    step: t,
                    msg: format!(
                        "shifted candidate failed certification: {:?}",
                        certify(&warm, c, CERTIFY_TOL).first_violation
                    ),
                });
            }
            let stop = stopping_plan(&x, horizon, params, mats, c, &predictor_mask)?;
            warm = jointwise_merge(
                &warm,
                &stop,
                &x,
                params,
                mats,
                c,
                &predictor_mask,
                CERTIFY_TOL,
            )?;
            let report = certify(&warm, c, CERTIFY_TOL);
            if !report.feasible {
                return Err(Error::InvariantBreach {
                    step: t,
                    msg: format!("no certified warm start: {:?}", report.first_violation),
                });
            }
        }

        let spec = OcpSpec {
            horizon,
            gamma: loop_config.gamma,
            initial_state: x.clone(),
            constraint_set: *c,
            fault_mask: predictor_mask,
        };
        let sol = solve(&spec, &warm, &loop_config.solver, params, mats).map_err(|e| match e {
            Error::InvariantBreach { msg, .. } => Error::InvariantBreach { step: t, msg },
            other => other,
        })?;

        let mut applied = sol.inputs[0].clone();
        if fault_active(t) {
            if let Some(mask) = &plant_fault {
                mask.pin_input(&mut applied);
            }
        }
        x = model::step(&x, &applied, params, mats)?;

        pending = record(t + 1, params.ts, &x, applied, c);
        pending.cost = Some(sol.cost);
        pending.iterations = sol.iterations;
        pending.status = Some(sol.status);
        pending.warm_start = Some(warm.source);
        prev = Some(sol.inputs);
    }
    Ok(records)
}

fn initial_warm_start(
    x: &RobotState,
    horizon: usize,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
    mask: &FaultMask,
) -> Result<CandidatePlan> {
    if x.v_phi.iter().all(|v| *v == 0.0) {
        let inputs = vec![DVector::zeros(params.n_joints()); horizon];
        let predicted_states = ocp::rollout(x, &inputs, params, mats, mask)?;
        Ok(CandidatePlan {
            inputs,
            source: CandidateSource::PureStopping,
            predicted_states,
        })
    } else {
        stopping_plan(x, horizon, params, mats, c, mask)
    }
}

/// Runs the lateral undulation controller. Constraint violations are
/// recorded, not prevented.
pub fn run_lu(
    initial_state: &RobotState,
    total_steps: usize,
    lu_params: &LuParams,
    params: &RobotParams,
    mats: &CouplingMatrices,
    c: &ConstraintSet,
) -> Result<Vec<TraceRecord>> {
    params.validate()?;
    lu_params.validate()?;
    initial_state.check_dims(params)?;
    let mut x = initial_state.clone();
    let mut records = Vec::with_capacity(total_steps + 1);
    records.push(record(
        0,
        params.ts,
        &x,
        DVector::zeros(params.n_joints()),
        c,
    ));
    for t in 0..total_steps {
        let u = lu_control(&x, lu_params, params.n_links, t as f64 * params.ts);
        x = model::step(&x, &u, params, mats)?;
        records.push(record(t + 1, params.ts, &x, u, c));
    }
    Ok(records)
}
