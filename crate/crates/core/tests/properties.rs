use nalgebra::DVector;
use proptest::prelude::*;

use snake_empc::feasibility::{
    certify, stopping_horizon, stopping_input, stopping_plan, CERTIFY_TOL,
};
use snake_empc::model::{self, ConstraintSet, CouplingMatrices, RobotParams, RobotState};
use snake_empc::monitor::{check_invariance, estimate_epsilon};
use snake_empc::ocp::{evaluate_cost, rollout, FaultMask, OcpSpec, SolveStatus};
use snake_empc::solver::{solve, solve_logged, SolverConfig};

fn setup() -> (RobotParams, CouplingMatrices, ConstraintSet) {
    let p = RobotParams::default();
    let m = CouplingMatrices::new(p.n_links).unwrap();
    (p, m, ConstraintSet::default())
}

fn joint_vec(n: usize, bound: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-bound..bound, n).prop_map(DVector::from_vec)
}

/// Any state of the eight-joint robot, with joint coordinates inside `scale`
/// times their bounds.
fn state(scale: f64) -> impl Strategy<Value = RobotState> {
    let c = ConstraintSet::default();
    (
        joint_vec(8, scale * c.phi_max),
        joint_vec(8, scale * c.v_phi_max),
        prop::array::uniform6(-1.0..1.0f64),
    )
        .prop_map(|(phi, v_phi, r)| RobotState {
            phi,
            theta: 3.0 * r[0],
            p_x: 10.0 * r[1],
            p_y: 10.0 * r[2],
            v_phi,
            v_theta: 0.5 * r[3],
            v_t: 0.2 * r[4],
            v_n: 0.1 * r[5],
        })
}

fn inputs(horizon: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(joint_vec(8, 0.3), horizon)
}

fn same_bits(a: &RobotState, b: &RobotState) -> bool {
    a.to_vec()
        .iter()
        .zip(b.to_vec().iter())
        .all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_is_affine_in_the_input(
        x in state(2.0),
        u1 in joint_vec(8, 0.3),
        u2 in joint_vec(8, 0.3),
        alpha in 0.0..1.0f64,
    ) {
        let (p, m, _) = setup();
        let mix = &u1 * alpha + &u2 * (1.0 - alpha);
        let a = model::step(&x, &u1, &p, &m).unwrap();
        let b = model::step(&x, &u2, &p, &m).unwrap();
        let c = model::step(&x, &mix, &p, &m).unwrap();
        let expected = &a.v_phi * alpha + &b.v_phi * (1.0 - alpha);
        prop_assert!((&c.v_phi - expected).amax() < 1e-15);
        let mut a_rest = a.clone();
        a_rest.v_phi = c.v_phi.clone();
        prop_assert!(same_bits(&a_rest, &c));
    }

    #[test]
    fn step_is_bit_reproducible(x in state(2.0), u in joint_vec(8, 0.3)) {
        let (p, m, _) = setup();
        let a = model::step(&x, &u, &p, &m).unwrap();
        let b = model::step(&x, &u, &p, &m).unwrap();
        prop_assert!(same_bits(&a, &b));
    }

    #[test]
    fn stopping_law_brakes_to_rest_in_b_steps(
        n_joints in 1usize..=16,
        seed in prop::collection::vec(-1.0..=1.0f64, 16),
    ) {
        let c = ConstraintSet::default();
        let ts = 0.05;
        let b = stopping_horizon(&c, ts);
        let mut v = DVector::from_fn(n_joints, |j, _| seed[j] * c.v_phi_max);
        for _ in 0..b {
            let u = stopping_input(&v, &c, ts);
            prop_assert!(u.amax() <= c.u_max);
            v += &u * ts;
        }
        prop_assert!(v.amax() <= 1e-12);
    }

    #[test]
    fn cost_is_consistent_under_splitting(
        x in state(2.0),
        u in inputs(20),
        split in 1usize..20,
        gamma in prop::sample::select(vec![0.0, 0.025, 1.0]),
    ) {
        let (p, m, _) = setup();
        let none = FaultMask::none(8);
        let full = rollout(&x, &u, &p, &m, &none).unwrap();
        let again = rollout(&x, &u, &p, &m, &none).unwrap();
        prop_assert_eq!(&full, &again);
        let head = rollout(&x, &u[..split], &p, &m, &none).unwrap();
        let tail = rollout(&head[split], &u[split..], &p, &m, &none).unwrap();
        let mut joined = head.clone();
        joined.extend_from_slice(&tail[1..]);
        prop_assert_eq!(&joined, &full);

        let j = evaluate_cost(&full, &u, gamma).unwrap();
        prop_assert_eq!(j.to_bits(), evaluate_cost(&again, &u, gamma).unwrap().to_bits());
        // The split pieces share state `split`; count its velocity once.
        let j_head = evaluate_cost(&head, &u[..split], gamma).unwrap();
        let j_tail = evaluate_cost(&tail, &u[split..], gamma).unwrap();
        prop_assert!((j_head + j_tail + head[split].v_t - j).abs() < 1e-12);
    }

    #[test]
    fn blocked_joint_ignores_its_input(
        x in state(1.0),
        u in inputs(20),
        joint in 0usize..8,
        junk in -5.0..5.0f64,
    ) {
        let (p, m, _) = setup();
        let mask = FaultMask::single(8, joint);
        let a = rollout(&x, &u, &p, &m, &mask).unwrap();
        let mut zeroed = u.clone();
        let mut noisy = u.clone();
        for k in 0..u.len() {
            zeroed[k][joint] = 0.0;
            noisy[k][joint] = junk;
        }
        prop_assert_eq!(&a, &rollout(&x, &zeroed, &p, &m, &mask).unwrap());
        prop_assert_eq!(&a, &rollout(&x, &noisy, &p, &m, &mask).unwrap());
        for s in &a {
            prop_assert_eq!(s.phi[joint].to_bits(), x.phi[joint].to_bits());
            prop_assert_eq!(s.v_phi[joint], 0.0);
        }
    }

    #[test]
    fn epsilon_ignores_trace_order(
        a in prop::collection::vec(-0.2..0.2f64, 2..40),
        b in prop::collection::vec(-0.2..0.2f64, 2..40),
    ) {
        prop_assert_eq!(
            estimate_epsilon(&[&a, &b], 0.05).to_bits(),
            estimate_epsilon(&[&b, &a], 0.05).to_bits()
        );
    }

    #[test]
    fn nonnegative_velocity_never_leaves_zero_benchmark(
        head in prop::collection::vec(-0.2..0.0f64, 0..10),
        tail in prop::collection::vec(0.0..0.2f64, 1..40),
    ) {
        let mut v = head;
        v.extend(tail);
        let r = check_invariance(&v, 0.05, 0.0);
        prop_assert!(r.invariance_violations.is_empty());
        prop_assert!(r.converged);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Solver contract from a stopping-plan warm start at a random state.
    #[test]
    fn solver_contract(
        x in state(0.6),
        gamma in prop::sample::select(vec![0.0, 0.025, 0.5]),
        blocked in prop::option::of(0usize..8),
    ) {
        let (p, m, c) = setup();
        let mask = blocked.map_or(FaultMask::none(8), |j| FaultMask::single(8, j));
        let mut x = x;
        mask.pin_state(&mut x);
        let warm = stopping_plan(&x, 20, &p, &m, &c, &mask).unwrap();
        prop_assume!(certify(&warm, &c, CERTIFY_TOL).feasible);
        let spec = OcpSpec {
            horizon: 20,
            gamma,
            initial_state: x,
            constraint_set: c,
            fault_mask: mask.clone(),
        };
        let cfg = SolverConfig::default();
        let warm_cost = evaluate_cost(&warm.predicted_states, &warm.inputs, gamma).unwrap();
        let (sol, log) = solve_logged(&spec, &warm, &cfg, &p, &m).unwrap();

        prop_assert!(sol.cost <= warm_cost + 1e-12);
        prop_assert!(sol.max_state_violation <= cfg.constraint_tol);
        for u in &sol.inputs {
            prop_assert!(u.amax() <= c.u_max);
        }
        if let Some(j) = blocked {
            prop_assert!(sol.inputs.iter().all(|u| u[j] == 0.0));
        }
        if sol.status != SolveStatus::FellBackToCandidate {
            for run in &log.costs {
                for w in run.windows(2) {
                    prop_assert!(w[1] <= w[0]);
                }
            }
        }
        let again = solve(&spec, &warm, &cfg, &p, &m).unwrap();
        prop_assert_eq!(&again, &sol);
    }
}
