//! Euclidean projection onto the feasible input set of a single joint.
//!
//! A joint's velocity and distance over the horizon are affine in that
//! joint's own inputs, so its box constraints form a polytope in the
//! `horizon`-dimensional input space. The projection is a small strictly
//! convex QP.

use nalgebra::{DMatrix, DVector};

use crate::model::ConstraintSet;

/// Rows below this norm carry no input dependence and are dropped.
const ZERO_ROW: f64 = 1e-300;
/// Row overshoot accepted as satisfied.
const FEAS_TOL: f64 = 1e-14;
/// Direction components below this count as zero.
const DIR_TOL: f64 = 1e-12;

/// `{u : rows * u <= rhs}` with unit-norm rows.
#[derive(Debug, Clone)]
pub(crate) struct JointPolytope {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl JointPolytope {
    /// Input set of a joint starting at distance `phi0` and velocity `v0`.
    pub(crate) fn new(phi0: f64, v0: f64, horizon: usize, ts: f64, c: &ConstraintSet) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(6 * horizon);
        let mut rhs: Vec<f64> = Vec::with_capacity(6 * horizon);
        let mut push = |coeffs: Vec<f64>, offset: f64, bound: f64| {
            let norm = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < ZERO_ROW {
                return;
            }
            let neg: Vec<f64> = coeffs.iter().map(|a| -a / norm).collect();
            rows.push(coeffs.iter().map(|a| a / norm).collect());
            rhs.push((bound - offset) / norm);
            rows.push(neg);
            rhs.push((bound + offset) / norm);
        };
        for k in 0..horizon {
            let mut unit = vec![0.0; horizon];
            unit[k] = 1.0;
            push(unit, 0.0, c.u_max);
        }
        for k in 1..=horizon {
            let vel: Vec<f64> = (0..horizon).map(|i| if i < k { ts } else { 0.0 }).collect();
            push(vel, v0, c.v_phi_max);
            let pos: Vec<f64> = (0..horizon)
                .map(|i| {
                    if i + 1 < k {
                        ts * ts * (k - 1 - i) as f64
                    } else {
                        0.0
                    }
                })
                .collect();
            push(pos, phi0 + k as f64 * ts * v0, c.phi_max);
        }
        let n = horizon;
        let m = rows.len();
        Self {
            rows: DMatrix::from_fn(m, n, |r, i| rows[r][i]),
            rhs: DVector::from_vec(rhs),
        }
    }

    /// Largest constraint overshoot of `u` (in units of the scaled rows).
    #[cfg(test)]
    pub(crate) fn violation(&self, u: &DVector<f64>) -> f64 {
        (&self.rows * u - &self.rhs).max().max(0.0)
    }

    /// Projection of `target` onto the polytope by the dual active-set
    /// method of Goldfarb and Idnani with identity Hessian: start from the
    /// unconstrained minimizer and add the most violated row until none is
    /// left, dropping rows whose multiplier would turn negative.
    pub(crate) fn project(&self, target: &DVector<f64>) -> DVector<f64> {
        let n = target.len();
        let m = self.rows.nrows();
        let mut x = target.clone();
        let mut active: Vec<usize> = Vec::with_capacity(n);
        let mut mult: Vec<f64> = Vec::with_capacity(n);

        for _ in 0..(2 * m + 2 * n) {
            let overshoot = &self.rows * &x - &self.rhs;
            let (p, worst) = overshoot.argmax();
            if worst <= FEAS_TOL {
                return x;
            }
            let a_p = self.rows.row(p).transpose();
            let mut added = 0.0;
            loop {
                // Primal direction: `a_p` projected onto the null space of the
                // active rows. Dual direction: its coefficients on those rows.
                let (z, r) = if active.is_empty() {
                    (a_p.clone(), DVector::zeros(0))
                } else {
                    let na = self.rows.select_rows(active.iter());
                    let Some(chol) = (&na * na.transpose()).cholesky() else {
                        return x;
                    };
                    let r = chol.solve(&(&na * &a_p));
                    (&a_p - na.transpose() * &r, r)
                };

                let mut t_dual = f64::INFINITY;
                let mut drop = None;
                for (j, (rj, uj)) in r.iter().zip(&mult).enumerate() {
                    if *rj > DIR_TOL && uj / rj < t_dual {
                        t_dual = uj / rj;
                        drop = Some(j);
                    }
                }
                let zz = z.norm_squared();
                let residual = a_p.dot(&x) - self.rhs[p];
                let t_primal = if zz > DIR_TOL * DIR_TOL {
                    residual / zz
                } else {
                    f64::INFINITY
                };
                let t = t_dual.min(t_primal);
                if !t.is_finite() {
                    // Infeasible polytope; cannot happen around a certified plan.
                    return x;
                }
                if t_primal.is_finite() {
                    x -= t * &z;
                }
                for (uj, rj) in mult.iter_mut().zip(r.iter()) {
                    *uj -= t * rj;
                }
                added += t;
                if t_primal <= t_dual {
                    active.push(p);
                    mult.push(added);
                    break;
                }
                let j = drop.expect("finite dual step has a blocking row");
                active.remove(j);
                mult.remove(j);
            }
        }
        x
    }
}
