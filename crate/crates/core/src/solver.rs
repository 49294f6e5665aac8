//! Solver for the single-shooting program.
//!
//! Each joint's distance and velocity are affine in that joint's inputs, so
//! the input box together with the joint-state boxes is a polytope per joint.
//! The solver runs projected gradient descent onto that set with
//! Barzilai-Borwein trial steps and monotone Armijo backtracking along the
//! projected direction. Every iterate is feasible. The certified warm start
//! is both the starting point and a floor: the returned plan is never worse
//! than it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::feasibility::{certify, CandidatePlan, CERTIFY_TOL};
use crate::model::{ConstraintSet, CouplingMatrices, RobotParams, RobotState};
use crate::ocp::{self, OcpSolution, OcpSpec, SolveStatus};
use crate::projection::JointPolytope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepRule {
    ArmijoBacktracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Gradient runs; each one restarts the step length from scratch.
    pub max_outer_iters: usize,
    /// Accepted steps per gradient run.
    pub max_inner_iters: usize,
    /// Infinity norm of the projected gradient that counts as stationary.
    pub grad_tol: f64,
    /// Largest state-box overshoot accepted in a returned plan.
    pub constraint_tol: f64,
    /// Penalty schedule for state constraints that are not projected. Every
    /// joint-state box is handled by the exact projection, so these only
    /// take part in validation.
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub step_rule: StepRule,
    /// When false, an optimizer result that fails the contract is an error
    /// instead of being replaced by the warm start.
    pub fallback_enabled: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 8,
            max_inner_iters: 400,
            grad_tol: 1e-6,
            constraint_tol: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            step_rule: StepRule::ArmijoBacktracking,
            fallback_enabled: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.constraint_tol > 0.0 && self.penalty_init > 0.0) {
            return Err(Error::InvalidParameter(
                "solver tolerances and initial penalty must be > 0".into(),
            ));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "penalty_growth must be > 1, got {}",
                self.penalty_growth
            )));
        }
        Ok(())
    }
}

/// Clamps every entry to `[-u_max, u_max]`.
pub fn project_inputs(inputs: &[DVector<f64>], c: &ConstraintSet) -> Vec<DVector<f64>> {
    inputs
        .iter()
        .map(|u| u.map(|x| x.clamp(-c.u_max, c.u_max)))
        .collect()
}

/// Cost of every accepted iterate, one list per gradient run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveLog {
    pub costs: Vec<Vec<f64>>,
}

pub fn solve(
    spec: &OcpSpec,
    warm_start: &CandidatePlan,
    config: &SolverConfig,
    params: &RobotParams,
    mats: &CouplingMatrices,
) -> Result<OcpSolution> {
    solve_logged(spec, warm_start, config, params, mats).map(|(s, _)| s)
}

/// [`solve`] that also returns the cost history of each gradient run.
pub fn solve_logged(
    spec: &OcpSpec,
    warm_start: &CandidatePlan,
    config: &SolverConfig,
    params: &RobotParams,
    mats: &CouplingMatrices,
) -> Result<(OcpSolution, SolveLog)> {
    spec.validate(params)?;
    config.validate()?;
    check_len("warm start horizon", spec.horizon, warm_start.horizon())?;
    let c = &spec.constraint_set;
    let report = certify(warm_start, c, CERTIFY_TOL);
    if !report.feasible {
        return Err(Error::InfeasibleWarmStart(format!(
            "{:?}",
            report.first_violation
        )));
    }

    let problem = Problem::new(spec, params, mats);
    let z_warm = problem.flatten(&warm_start.inputs);
    let warm_eval = problem.evaluate(&z_warm);
    let fallback = |iterations: usize| OcpSolution {
        inputs: warm_start.inputs.clone(),
        states: warm_eval.states.clone(),
        cost: warm_eval.cost,
        max_state_violation: warm_eval.violation,
        iterations,
        status: SolveStatus::FellBackToCandidate,
    };

    let mut log = SolveLog::default();
    if config.max_inner_iters == 0 || config.max_outer_iters == 0 {
        return Ok((fallback(0), log));
    }

    let mut z = problem.pin_blocked(&z_warm);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..config.max_outer_iters {
        let (z_new, used, stationary, costs) = problem.descend(z, config);
        z = z_new;
        iterations += used;
        log.costs.push(costs);
        if stationary {
            converged = true;
            break;
        }
    }

    let eval = problem.evaluate(&z);
    let status = if converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    let acceptable = eval.violation <= config.constraint_tol
        && z.iter().all(|u| u.abs() <= c.u_max)
        && eval.cost <= warm_eval.cost + 1e-12;
    if !acceptable {
        if !config.fallback_enabled {
            return Err(Error::InvariantBreach {
                step: 0,
                msg: format!(
                    "optimizer result violates the contract (violation {:e}, cost {} vs warm start {})",
                    eval.violation, eval.cost, warm_eval.cost
                ),
            });
        }
        return Ok((fallback(iterations), log));
    }
    Ok((
        OcpSolution {
            inputs: problem.unflatten(&z),
            states: eval.states,
            cost: eval.cost,
            max_state_violation: eval.violation,
            iterations,
            status,
        },
        log,
    ))
}

const ARMIJO_SIGMA: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

struct Evaluation {
    states: Vec<RobotState>,
    cost: f64,
    violation: f64,
}

struct Problem<'a> {
    spec: &'a OcpSpec,
    params: &'a RobotParams,
    mats: &'a CouplingMatrices,
    nj: usize,
    /// Feasible input set of every free joint; `None` for blocked joints.
    polytopes: Vec<Option<JointPolytope>>,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a OcpSpec, params: &'a RobotParams, mats: &'a CouplingMatrices) -> Self {
        let nj = params.n_joints();
        let x0 = &spec.initial_state;
        let polytopes = (0..nj)
            .map(|j| {
                (!spec.fault_mask.is_blocked(j)).then(|| {
                    JointPolytope::new(
                        x0.phi[j],
                        x0.v_phi[j],
                        spec.horizon,
                        params.ts,
                        &spec.constraint_set,
                    )
                })
            })
            .collect();
        Self {
            spec,
            params,
            mats,
            nj,
            polytopes,
        }
    }

    fn flatten(&self, inputs: &[DVector<f64>]) -> Vec<f64> {
        inputs.iter().flat_map(|u| u.iter().copied()).collect()
    }

    fn unflatten(&self, z: &[f64]) -> Vec<DVector<f64>> {
        z.chunks(self.nj).map(DVector::from_column_slice).collect()
    }

    fn pin_blocked(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, u)| {
                if self.polytopes[i % self.nj].is_some() {
                    *u
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Projects `target` onto the feasible set joint by joint.
    fn project(&self, target: &[f64]) -> Vec<f64> {
        let horizon = self.spec.horizon;
        let u_max = self.spec.constraint_set.u_max;
        let mut out = vec![0.0; target.len()];
        for (j, poly) in self.polytopes.iter().enumerate() {
            let Some(poly) = poly else { continue };
            let column = |z: &[f64]| DVector::from_fn(horizon, |k, _| z[k * self.nj + j]);
            let x = poly.project(&column(target));
            for k in 0..horizon {
                out[k * self.nj + j] = x[k].clamp(-u_max, u_max);
            }
        }
        out
    }

    fn evaluate(&self, z: &[f64]) -> Evaluation {
        let inputs = self.unflatten(z);
        let mask = &self.spec.fault_mask;
        let states = ocp::rollout_unchecked(
            &self.spec.initial_state,
            &inputs,
            self.params,
            self.mats,
            mask,
        );
        let energy_inputs = ocp::effective_inputs(&inputs, mask);
        let cost = ocp::evaluate_cost(&states, &energy_inputs, self.spec.gamma)
            .expect("rollout length matches inputs");
        let violation = ocp::max_state_violation(&states[1..], &self.spec.constraint_set);
        Evaluation {
            states,
            cost,
            violation,
        }
    }

    fn gradient(&self, z: &[f64], eval: &Evaluation) -> Vec<f64> {
        let inputs = self.unflatten(z);
        let grad = ocp::adjoint_gradient(
            &eval.states,
            &inputs,
            self.params,
            self.mats,
            self.spec.gamma,
            &self.spec.fault_mask,
        );
        self.flatten(&grad)
    }

    /// One projected gradient run from the feasible point `z`. Returns the
    /// final iterate, the number of accepted steps, whether it stopped on the
    /// stationarity test and the cost of every accepted iterate.
    fn descend(&self, mut z: Vec<f64>, config: &SolverConfig) -> (Vec<f64>, usize, bool, Vec<f64>) {
        let mut eval = self.evaluate(&z);
        let mut grad = self.gradient(&z, &eval);
        let mut costs = vec![eval.cost];
        let mut step = initial_step(&grad, self.spec.constraint_set.u_max);

        for it in 0..config.max_inner_iters {
            let trial: Vec<f64> = z.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let projected = self.project(&trial);
            let direction: Vec<f64> = projected.iter().zip(&z).map(|(p, x)| p - x).collect();
            let stationarity = direction.iter().fold(0.0_f64, |m, d| m.max(d.abs())) / step;
            let slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if stationarity <= config.grad_tol || slope >= 0.0 {
                return (z, it, true, costs);
            }

            // Points between two feasible iterates are feasible, so the
            // backtracking never leaves the set.
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let candidate: Vec<f64> = if t == 1.0 {
                    projected.clone()
                } else {
                    z.iter().zip(&direction).map(|(x, d)| x + t * d).collect()
                };
                let cand_eval = self.evaluate(&candidate);
                if cand_eval.cost <= eval.cost + ARMIJO_SIGMA * t * slope {
                    accepted = Some((candidate, cand_eval));
                    break;
                }
                t *= 0.5;
            }
            let Some((z_new, eval_new)) = accepted else {
                return (z, it, false, costs);
            };
            let grad_new = self.gradient(&z_new, &eval_new);

            // Barzilai-Borwein trial step for the next iteration.
            let (ss, sy) = z_new.iter().zip(&z).zip(grad_new.iter().zip(&grad)).fold(
                (0.0, 0.0),
                |(ss, sy), ((a, b), (ga, gb))| {
                    let s = a - b;
                    (ss + s * s, sy + s * (ga - gb))
                },
            );
            step = if sy > 0.0 {
                (ss / sy).clamp(1e-10, 1e10)
            } else {
                (step * 2.0).min(1e10)
            };

            z = z_new;
            eval = eval_new;
            grad = grad_new;
            costs.push(eval.cost);
        }
        (z, config.max_inner_iters, false, costs)
    }
}

fn initial_step(grad: &[f64], u_max: f64) -> f64 {
    let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    if gmax > 0.0 {
        (0.1 * u_max / gmax).min(1e10)
    } else {
        1.0
    }
}
