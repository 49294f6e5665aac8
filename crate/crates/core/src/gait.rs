//! Lateral undulation reference gait and its PD tracking controller, used as
//! the comparison baseline.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RobotState;

/// Gait and controller parameters. Angles are stored in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuParams {
    /// Amplitude (m).
    pub alpha: f64,
    /// Angular frequency (rad/s).
    pub omega: f64,
    /// Phase offset between neighbouring joints (rad).
    pub delta: f64,
    /// Constant joint offset (m).
    pub phi0: f64,
    pub k_d: f64,
    pub k_p: f64,
}

impl Default for LuParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            omega: 120f64.to_radians(),
            delta: 40f64.to_radians(),
            phi0: 0.0,
            k_d: 5.0,
            k_p: 20.0,
        }
    }
}

impl LuParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.omega > 0.0 && self.k_d > 0.0 && self.k_p > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "gait requires alpha >= 0 and omega, k_d, k_p > 0, got {self:?}"
            )))
        }
    }
}

/// Reference joint distances, velocities and accelerations at `time_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuReference {
    pub phi: DVector<f64>,
    pub v_phi: DVector<f64>,
    pub u: DVector<f64>,
}

/// Evaluates the body wave `phi0 + alpha sin(omega t + (i-1) delta)` and its
/// first two time derivatives analytically.
pub fn lu_reference(p: &LuParams, n_links: usize, time_s: f64) -> LuReference {
    let nj = n_links.saturating_sub(1);
    let mut phi = DVector::zeros(nj);
    let mut v_phi = DVector::zeros(nj);
    let mut u = DVector::zeros(nj);
    for i in 0..nj {
        let (s, c) = (p.omega * time_s + i as f64 * p.delta).sin_cos();
        phi[i] = p.phi0 + p.alpha * s;
        v_phi[i] = p.alpha * p.omega * c;
        u[i] = -p.alpha * p.omega * p.omega * s;
    }
    LuReference { phi, v_phi, u }
}

/// PD tracking law around the reference. The output is deliberately not
/// saturated to the input bound.
pub fn lu_control(state: &RobotState, p: &LuParams, n_links: usize, time_s: f64) -> DVector<f64> {
    let r = lu_reference(p, n_links, time_s);
    r.u + (r.v_phi - &state.v_phi) * p.k_d + (r.phi - &state.phi) * p.k_p
}
