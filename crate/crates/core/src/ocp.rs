//! The economic MPC program as a smooth function of the input sequence
//! (single shooting): rollout, cost, adjoint gradient and state-constraint
//! margins.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{
    self, propulsion_coefficient, ConstraintSet, CouplingMatrices, RobotParams, RobotState,
};

/// Joints whose actuator is blocked. A blocked joint has its velocity pinned
/// to zero and its input forced to zero before every step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultMask(Vec<bool>);

impl FaultMask {
    pub fn none(n_joints: usize) -> Self {
        Self(vec![false; n_joints])
    }

    /// Blocks the single joint at zero-based `joint`.
    pub fn single(n_joints: usize, joint: usize) -> Self {
        let mut m = Self::none(n_joints);
        if joint < n_joints {
            m.0[joint] = true;
        }
        m
    }

    pub fn from_vec(blocked: Vec<bool>) -> Self {
        Self(blocked)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_blocked(&self, joint: usize) -> bool {
        self.0.get(joint).copied().unwrap_or(false)
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|b| *b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn pin_state(&self, state: &mut RobotState) {
        for (j, _) in self.0.iter().enumerate().filter(|(_, b)| **b) {
            state.v_phi[j] = 0.0;
        }
    }

    pub fn pin_input(&self, u: &mut DVector<f64>) {
        for (j, _) in self.0.iter().enumerate().filter(|(_, b)| **b) {
            u[j] = 0.0;
        }
    }
}

/// One instance of the economic MPC program.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub horizon: usize,
    /// Weight of the input energy term.
    pub gamma: f64,
    pub initial_state: RobotState,
    pub constraint_set: ConstraintSet,
    pub fault_mask: FaultMask,
}

impl OcpSpec {
    pub fn validate(&self, params: &RobotParams) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        self.initial_state.check_dims(params)?;
        check_len("fault mask", params.n_joints(), self.fault_mask.len())?;
        self.constraint_set.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    FellBackToCandidate,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::FellBackToCandidate => "fell_back_to_candidate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<RobotState>,
    pub cost: f64,
    pub max_state_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// `-sum_{k=0}^{N} v_t(k) + gamma sum_{k=0}^{N-1} u(k)^T u(k)`.
pub fn evaluate_cost(states: &[RobotState], inputs: &[DVector<f64>], gamma: f64) -> Result<f64> {
    check_len("state trajectory", inputs.len() + 1, states.len())?;
    let velocity: f64 = states.iter().map(|x| x.v_t).sum();
    let energy: f64 = inputs.iter().map(|u| u.norm_squared()).sum();
    Ok(-velocity + gamma * energy)
}

/// Repeated [`model::step`] from `initial_state`, honouring the fault mask.
/// The returned trajectory has `inputs.len() + 1` entries and starts with the
/// pinned initial state.
pub fn rollout(
    initial_state: &RobotState,
    inputs: &[DVector<f64>],
    params: &RobotParams,
    mats: &CouplingMatrices,
    fault_mask: &FaultMask,
) -> Result<Vec<RobotState>> {
    initial_state.check_dims(params)?;
    check_len("coupling matrices", params.n_links, mats.n_links())?;
    check_len("fault mask", params.n_joints(), fault_mask.len())?;
    for u in inputs {
        check_len("input", params.n_joints(), u.len())?;
    }
    Ok(rollout_unchecked(
        initial_state,
        inputs,
        params,
        mats,
        fault_mask,
    ))
}

pub(crate) fn rollout_unchecked(
    initial_state: &RobotState,
    inputs: &[DVector<f64>],
    params: &RobotParams,
    mats: &CouplingMatrices,
    fault_mask: &FaultMask,
) -> Vec<RobotState> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut x = initial_state.clone();
    fault_mask.pin_state(&mut x);
    for u in inputs {
        let next = if fault_mask.any() {
            let mut u = u.clone();
            fault_mask.pin_input(&mut u);
            model::step_unchecked(&x, &u, params, mats)
        } else {
            model::step_unchecked(&x, u, params, mats)
        };
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    states
}

/// Inputs with blocked joints zeroed, as seen by the dynamics.
pub(crate) fn effective_inputs(
    inputs: &[DVector<f64>],
    fault_mask: &FaultMask,
) -> Vec<DVector<f64>> {
    inputs
        .iter()
        .map(|u| {
            let mut u = u.clone();
            fault_mask.pin_input(&mut u);
            u
        })
        .collect()
}

/// Cost of the rollout of `inputs`. The energy term is charged on the
/// inputs the dynamics actually see.
pub fn rollout_cost(
    initial_state: &RobotState,
    inputs: &[DVector<f64>],
    params: &RobotParams,
    mats: &CouplingMatrices,
    gamma: f64,
    fault_mask: &FaultMask,
) -> Result<f64> {
    let states = rollout(initial_state, inputs, params, mats, fault_mask)?;
    evaluate_cost(&states, &effective_inputs(inputs, fault_mask), gamma)
}

/// Exact gradient of the rollout cost with respect to every input entry.
pub fn cost_gradient(
    initial_state: &RobotState,
    inputs: &[DVector<f64>],
    params: &RobotParams,
    mats: &CouplingMatrices,
    gamma: f64,
    fault_mask: &FaultMask,
) -> Result<Vec<DVector<f64>>> {
    let states = rollout(initial_state, inputs, params, mats, fault_mask)?;
    Ok(adjoint_gradient(
        &states, inputs, params, mats, gamma, fault_mask,
    ))
}

/// Backward pass through the model. Only `(phi, v_phi, v_t, v_n)` carry
/// adjoints; orientation and position never reach the cost.
pub(crate) fn adjoint_gradient(
    states: &[RobotState],
    inputs: &[DVector<f64>],
    params: &RobotParams,
    mats: &CouplingMatrices,
    gamma: f64,
    fault_mask: &FaultMask,
) -> Vec<DVector<f64>> {
    let horizon = inputs.len();
    let nj = params.n_joints();
    let ts = params.ts;
    let n = params.n_links as f64;
    let m = params.mass;
    let cp = propulsion_coefficient(params);
    let a = 2.0 * cp / (n * m);
    let c = cp / (n * m);
    let keep_t = 1.0 - ts * params.c_t / m;
    let keep_n = 1.0 - ts * params.c_n / m;

    // Adjoint of the terminal state: d(-v_t(N))/dx(N).
    let mut l_phi = DVector::zeros(nj);
    let mut l_vphi = DVector::zeros(nj);
    let mut l_t = -1.0;
    let mut l_n = 0.0;

    let mut grad = vec![DVector::zeros(nj); horizon];
    for k in (0..horizon).rev() {
        let x = &states[k];
        let mut g = &l_vphi * ts;
        if gamma != 0.0 {
            g += &inputs[k] * (2.0 * gamma);
        }
        fault_mask.pin_input(&mut g);
        grad[k] = g;

        if k == 0 {
            break;
        }
        let sum_phi = x.phi.sum();
        let m_vphi = &mats.a_dbar * &x.v_phi;
        let mt_phi = mats.a_dbar.tr_mul(&x.phi);

        let mut n_phi: DVector<f64> = &l_phi + &m_vphi * (-ts * c * l_t);
        n_phi.add_scalar_mut(ts * (l_t * a * x.v_n + l_n * a * x.v_t));
        let mut n_vphi = &l_phi * ts + &l_vphi + &mt_phi * (-ts * c * l_t);
        let n_t = l_t * keep_t + l_n * ts * a * sum_phi - 1.0;
        let n_n = l_t * ts * a * sum_phi + l_n * keep_n;
        // A blocked joint's velocity is overwritten before the step.
        for j in (0..nj).filter(|&j| fault_mask.is_blocked(j)) {
            n_vphi[j] = 0.0;
        }
        l_phi = n_phi;
        l_vphi = n_vphi;
        l_t = n_t;
        l_n = n_n;
    }
    grad
}

/// Signed state-constraint margins, feasible iff all are `<= 0`.
///
/// Layout: for each step `k` in order, for each joint `i` in order, the four
/// values `phi_i - phi_max`, `-phi_i - phi_max`, `v_phi_i - v_phi_max`,
/// `-v_phi_i - v_phi_max`.
pub fn state_constraint_values(states: &[RobotState], c: &ConstraintSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(states.iter().map(|x| 4 * x.n_joints()).sum());
    for x in states {
        for (p, v) in x.phi.iter().zip(x.v_phi.iter()) {
            out.extend([
                p - c.phi_max,
                -p - c.phi_max,
                v - c.v_phi_max,
                -v - c.v_phi_max,
            ]);
        }
    }
    out
}

/// Largest state-box overshoot along a trajectory, `0` when feasible.
pub fn max_state_violation(states: &[RobotState], c: &ConstraintSet) -> f64 {
    states
        .iter()
        .map(|x| model::in_state_set(x, c, 0.0).1)
        .fold(0.0, f64::max)
}
