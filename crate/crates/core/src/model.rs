//! Simplified planar snake robot model.
//!
//! The robot is a chain of `n_links` identical links joined by `n_links - 1`
//! translational joints. Joint distances and velocities form a bank of
//! decoupled double integrators driven by the input; the center-of-mass
//! velocities in the body-aligned t-n frame are driven by the bilinear
//! coupling between joint motion and anisotropic ground friction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Physical and numerical constants of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub n_links: usize,
    /// Mass of each link (kg).
    pub mass: f64,
    /// Length of each link (m).
    pub link_length: f64,
    /// Ground friction normal to the link.
    pub c_n: f64,
    /// Ground friction along the link.
    pub c_t: f64,
    /// Rotational damping constant.
    pub lambda1: f64,
    /// Rotational coupling constant.
    pub lambda2: f64,
    /// Sampling time (s).
    pub ts: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            n_links: 9,
            mass: 1.0,
            link_length: 0.14,
            c_n: 3.0,
            c_t: 1.0,
            lambda1: 0.5,
            lambda2: 20.0,
            ts: 0.05,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_links < 2 {
            return bad(format!("n_links must be >= 2, got {}", self.n_links));
        }
        if !(self.mass > 0.0) {
            return bad(format!("mass must be > 0, got {}", self.mass));
        }
        if !(self.link_length > 0.0) {
            return bad(format!("link_length must be > 0, got {}", self.link_length));
        }
        if !(self.ts > 0.0) {
            return bad(format!("ts must be > 0, got {}", self.ts));
        }
        if !(self.c_t > 0.0 && self.c_n > self.c_t) {
            return bad(format!(
                "friction must satisfy c_n > c_t > 0, got c_n = {}, c_t = {}",
                self.c_n, self.c_t
            ));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return bad("lambda1 and lambda2 must be finite".into());
        }
        Ok(())
    }

    pub fn n_joints(&self) -> usize {
        self.n_links - 1
    }

    /// Dimension of the full state vector, `2 n_links + 4`.
    pub fn state_dim(&self) -> usize {
        2 * self.n_links + 4
    }
}

/// Propulsion coefficient `(c_n - c_t) / (2 l)`.
pub fn propulsion_coefficient(params: &RobotParams) -> f64 {
    (params.c_n - params.c_t) / (2.0 * params.link_length)
}

/// Addition and difference matrices over adjacent links.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    /// `(N-1) x N`, rows `[.. 1 1 ..]`.
    pub a: DMatrix<f64>,
    /// `(N-1) x N`, rows `[.. 1 -1 ..]`.
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
    pub e_bar: DVector<f64>,
    /// `N x (N-1)`, `D^T (D D^T)^{-1}`.
    pub d_bar: DMatrix<f64>,
    /// `A D_bar`, the `(N-1) x (N-1)` matrix of the forward-velocity coupling.
    pub a_dbar: DMatrix<f64>,
}

impl CouplingMatrices {
    pub fn new(n_links: usize) -> Result<Self> {
        if n_links < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_links must be >= 2, got {n_links}"
            )));
        }
        let nj = n_links - 1;
        let mut a = DMatrix::zeros(nj, n_links);
        let mut d = DMatrix::zeros(nj, n_links);
        for i in 0..nj {
            a[(i, i)] = 1.0;
            a[(i, i + 1)] = 1.0;
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -1.0;
        }

        // D D^T is the SPD tridiagonal [-1 2 -1]; solve (D D^T) X = D for
        // X = (D D^T)^{-1} D and transpose, instead of forming the inverse.
        let ddt = &d * d.transpose();
        let chol = ddt
            .cholesky()
            .expect("D D^T is symmetric positive definite for the banded D");
        let d_bar = chol.solve(&d).transpose();
        let a_dbar = &a * &d_bar;

        Ok(Self {
            a,
            d,
            e: DVector::from_element(n_links, 1.0),
            e_bar: DVector::from_element(nj, 1.0),
            d_bar,
            a_dbar,
        })
    }

    pub fn n_links(&self) -> usize {
        self.e.len()
    }
}

/// Full robot state, `[phi, theta, p_x, p_y, v_phi, v_theta, v_t, v_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Joint distances (m).
    pub phi: DVector<f64>,
    /// Orientation (rad), unwrapped.
    pub theta: f64,
    pub p_x: f64,
    pub p_y: f64,
    /// Joint velocities (m/s).
    pub v_phi: DVector<f64>,
    pub v_theta: f64,
    /// Forward (tangential) velocity of the center of mass (m/s).
    pub v_t: f64,
    /// Normal velocity of the center of mass (m/s).
    pub v_n: f64,
}

impl RobotState {
    pub fn zeros(n_joints: usize) -> Self {
        Self {
            phi: DVector::zeros(n_joints),
            theta: 0.0,
            p_x: 0.0,
            p_y: 0.0,
            v_phi: DVector::zeros(n_joints),
            v_theta: 0.0,
            v_t: 0.0,
            v_n: 0.0,
        }
    }

    pub fn n_joints(&self) -> usize {
        self.phi.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_joints() + 6
    }

    /// Flattened in the canonical order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(self.phi.iter());
        out.extend([self.theta, self.p_x, self.p_y]);
        out.extend(self.v_phi.iter());
        out.extend([self.v_theta, self.v_t, self.v_n]);
        out
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < 8 || (x.len() - 6) % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "state vector of length {} is not of the form 2 N_l + 4",
                x.len()
            )));
        }
        let nj = (x.len() - 6) / 2;
        Ok(Self {
            phi: DVector::from_column_slice(&x[..nj]),
            theta: x[nj],
            p_x: x[nj + 1],
            p_y: x[nj + 2],
            v_phi: DVector::from_column_slice(&x[nj + 3..2 * nj + 3]),
            v_theta: x[2 * nj + 3],
            v_t: x[2 * nj + 4],
            v_n: x[2 * nj + 5],
        })
    }

    pub fn check_dims(&self, params: &RobotParams) -> Result<()> {
        check_len("phi", params.n_joints(), self.phi.len())?;
        check_len("v_phi", params.n_joints(), self.v_phi.len())
    }
}

/// Box bounds on joint distances, joint velocities and inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub phi_max: f64,
    pub v_phi_max: f64,
    pub u_max: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            phi_max: 0.052,
            v_phi_max: 0.109,
            u_max: 0.2276,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        if self.phi_max > 0.0 && self.v_phi_max > 0.0 && self.u_max > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "constraint bounds must be strictly positive, got {self:?}"
            )))
        }
    }
}

/// One step of the discrete model.
pub fn step(
    state: &RobotState,
    input: &DVector<f64>,
    params: &RobotParams,
    mats: &CouplingMatrices,
) -> Result<RobotState> {
    state.check_dims(params)?;
    check_len("input", params.n_joints(), input.len())?;
    check_len("coupling matrices", params.n_links, mats.n_links())?;
    Ok(step_unchecked(state, input, params, mats))
}

/// [`step`] without the dimension checks. Callers guarantee consistency.
pub(crate) fn step_unchecked(
    state: &RobotState,
    input: &DVector<f64>,
    params: &RobotParams,
    mats: &CouplingMatrices,
) -> RobotState {
    let ts = params.ts;
    let n = params.n_links as f64;
    let m = params.mass;
    let cp = propulsion_coefficient(params);
    let sum_phi = state.phi.sum();
    let coupling = state.phi.dot(&(&mats.a_dbar * &state.v_phi));
    let (sin_th, cos_th) = state.theta.sin_cos();

    RobotState {
        phi: &state.phi + &state.v_phi * ts,
        theta: state.theta + ts * state.v_theta,
        p_x: state.p_x + ts * (state.v_t * cos_th - state.v_n * sin_th),
        p_y: state.p_y + ts * (state.v_t * sin_th + state.v_n * cos_th),
        v_phi: &state.v_phi + input * ts,
        v_theta: state.v_theta
            + ts * (-params.lambda1 * state.v_theta
                + params.lambda2 / (n - 1.0) * state.v_t * sum_phi),
        v_t: state.v_t
            + ts * (-params.c_t / m * state.v_t + 2.0 * cp / (n * m) * state.v_n * sum_phi
                - cp / (n * m) * coupling),
        v_n: state.v_n
            + ts * (-params.c_n / m * state.v_n + 2.0 * cp / (n * m) * state.v_t * sum_phi),
    }
}

/// Membership in the state box. Returns `(inside, worst_overshoot)` where the
/// overshoot is `max(0, |x| - bound)` over all constrained entries.
pub fn in_state_set(state: &RobotState, c: &ConstraintSet, tol: f64) -> (bool, f64) {
    let worst_phi = state
        .phi
        .iter()
        .map(|p| p.abs() - c.phi_max)
        .fold(0.0_f64, f64::max);
    let worst_v = state
        .v_phi
        .iter()
        .map(|v| v.abs() - c.v_phi_max)
        .fold(0.0_f64, f64::max);
    let worst = worst_phi.max(worst_v);
    (worst <= tol, worst)
}

pub fn in_input_set(u: &DVector<f64>, c: &ConstraintSet, tol: f64) -> bool {
    input_violation(u, c) <= tol
}

pub(crate) fn input_violation(u: &DVector<f64>, c: &ConstraintSet) -> f64 {
    u.iter().map(|x| x.abs() - c.u_max).fold(0.0_f64, f64::max)
}
