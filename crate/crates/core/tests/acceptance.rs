//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
//!
//! Built with `harness = false`; run with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snake_empc::feasibility::{
    certify, shifted_candidate, stopping_horizon, stopping_input, CandidatePlan, CandidateSource,
    CERTIFY_TOL,
};
use snake_empc::harness::{execute, RunOutput, ScenarioConfig};
use snake_empc::model::{self, ConstraintSet, CouplingMatrices, RobotParams, RobotState};
use snake_empc::ocp::{cost_gradient, rollout, rollout_cost, FaultMask};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn band(name: &str, value: f64, target: f64, rel: f64) -> (bool, String) {
    let ok = within(value, target, rel);
    let dev = 100.0 * (value / target - 1.0);
    (
        ok,
        format!(
            "{name} = {value:.4} (target {target} +/-{:.0}%, {dev:+.1}%)",
            rel * 100.0
        ),
    )
}

fn run(scenario: &str, overrides: &[(&str, &str)]) -> (Vec<RunOutput>, Duration) {
    let mut cfg = ScenarioConfig::default();
    cfg.set("scenario", scenario).expect("scenario key");
    for (k, v) in overrides {
        cfg.set(k, v).expect("override key");
    }
    let start = Instant::now();
    let runs = execute(&cfg).expect("scenario runs");
    (runs, start.elapsed())
}

fn v_av(r: &RunOutput) -> f64 {
    r.metrics.window.v_av
}

fn energy(r: &RunOutput) -> f64 {
    r.metrics.window.energy
}

fn setup() -> (RobotParams, CouplingMatrices, ConstraintSet) {
    let p = RobotParams::default();
    let m = CouplingMatrices::new(p.n_links).expect("coupling matrices");
    (p, m, ConstraintSet::default())
}

fn criterion_1() -> Outcome {
    let (p, _, c) = setup();
    let b = stopping_horizon(&c, p.ts);
    let cfg = ScenarioConfig::default();
    let horizon_ok = cfg.horizon > b && cfg.validate().is_ok();
    outcome(
        b == 10 && horizon_ok,
        format!("b = {b}, N_p = {} > b: {horizon_ok}", cfg.horizon),
    )
}

struct Baselines {
    lu: RunOutput,
    empc: RunOutput,
    empc_time: Duration,
}

fn criterion_2(lu: &RunOutput, elapsed: Duration) -> Outcome {
    let (a, da) = band("v_av", v_av(lu), 0.0494, 0.05);
    let (b, db) = band("E", energy(lu), 0.2072, 0.05);
    let fast = elapsed < Duration::from_secs(1);
    outcome(a && b && fast, format!("{da}; {db}; runtime {elapsed:.2?}"))
}

fn criterion_3(base: &Baselines) -> Outcome {
    let empc = &base.empc;
    let (a, da) = band("v_av", v_av(empc), 0.0609, 0.10);
    let (b, db) = band("E", energy(empc), 0.2624, 0.15);
    let beats_lu = v_av(empc) > v_av(&base.lu);
    let worst = empc.metrics.violations.worst_violation;
    let feasible = worst <= 1e-6;
    let fast = base.empc_time < Duration::from_secs(300);
    outcome(
        a && b && beats_lu && feasible && fast,
        format!(
            "{da}; {db}; beats LU ({:.4}): {beats_lu}; worst violation {worst:.1e}; runtime {:.1?}",
            v_av(&base.lu),
            base.empc_time
        ),
    )
}

fn criterion_4(lu: &RunOutput) -> Outcome {
    let (runs, elapsed) = run("empc", &[("gamma", "0.025")]);
    let r = &runs[0];
    let (a, da) = band("v_av", v_av(r), 0.0554, 0.10);
    let less = energy(r) < energy(lu);
    let feasible = r.metrics.violations.worst_violation <= 1e-6;
    outcome(
        a && less && feasible && elapsed < Duration::from_secs(300),
        format!(
            "{da}; E = {:.4} < LU E {:.4}: {less} ({:.1}% of LU); runtime {elapsed:.1?}",
            energy(r),
            energy(lu),
            100.0 * energy(r) / energy(lu)
        ),
    )
}

fn criterion_5() -> Outcome {
    let (runs, elapsed) = run("fault_compare", &[]);
    let aware = runs
        .iter()
        .find(|r| r.name == "fault_aware")
        .expect("aware run");
    let unaware = runs
        .iter()
        .find(|r| r.name == "fault_unaware")
        .expect("unaware run");
    let ordered = v_av(aware) >= v_av(unaware);
    let (a, da) = band("aware v_av", v_av(aware), 0.0435, 0.10);
    let (b, db) = band("unaware v_av", v_av(unaware), 0.0418, 0.10);
    let steps = aware.trace.len() - 1;
    outcome(
        ordered && a && b && steps == 500,
        format!("{steps} steps; aware >= unaware: {ordered}; {da}; {db}; runtime {elapsed:.1?}"),
    )
}

fn criterion_6() -> Outcome {
    let (p, _, c) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let start = Instant::now();
    let threshold = p.ts * c.u_max;
    let (mut growth, mut flips) = (0, 0);
    for _ in 0..10_000 {
        let v = DVector::from_fn(8, |_, _| rng.random_range(-c.v_phi_max..=c.v_phi_max));
        let u = stopping_input(&v, &c, p.ts);
        let next = &v + &u * p.ts;
        for (before, after) in v.iter().zip(next.iter()) {
            if after.abs() > before.abs() {
                growth += 1;
            }
            if before.abs() > threshold && after * before < 0.0 {
                flips += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        growth == 0 && flips == 0 && elapsed < Duration::from_secs(1),
        format!("80000 joint samples: {growth} speed increases, {flips} sign flips; {elapsed:.2?}"),
    )
}

/// Whether braking at full rate from `(phi, v)` keeps the joint in its box.
fn brakes_safely(mut phi: f64, mut v: f64, ts: f64, c: &ConstraintSet) -> bool {
    for _ in 0..1000 {
        if v == 0.0 {
            return true;
        }
        phi += ts * v;
        if phi.abs() > c.phi_max {
            return false;
        }
        let u = if v.abs() > ts * c.u_max {
            -v.signum() * c.u_max
        } else {
            -v / ts
        };
        v += ts * u;
    }
    true
}

/// A random initial state and a random feasible plan over `horizon` steps.
/// Each joint input is drawn at random (often at a bound) and kept only if
/// the next joint state can still brake to rest inside the box.
fn random_feasible_plan(
    rng: &mut ChaCha8Rng,
    params: &RobotParams,
    c: &ConstraintSet,
    horizon: usize,
) -> (RobotState, Vec<DVector<f64>>) {
    let nj = params.n_joints();
    let ts = params.ts;
    let mut x = RobotState::zeros(nj);
    for j in 0..nj {
        loop {
            let phi = rng.random_range(-c.phi_max..=c.phi_max);
            let v = rng.random_range(-c.v_phi_max..=c.v_phi_max);
            if brakes_safely(phi, v, ts, c) {
                x.phi[j] = phi;
                x.v_phi[j] = v;
                break;
            }
        }
    }
    x.theta = rng.random_range(-3.0..3.0);
    x.v_theta = rng.random_range(-0.5..0.5);
    x.v_t = rng.random_range(-0.1..0.2);
    x.v_n = rng.random_range(-0.05..0.05);

    let (mut phi, mut vel) = (x.phi.clone(), x.v_phi.clone());
    let mut inputs = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let brake = stopping_input(&vel, c, ts);
        let u = DVector::from_fn(nj, |j, _| {
            for _ in 0..20 {
                let u = if rng.random_bool(0.3) {
                    if rng.random_bool(0.5) {
                        c.u_max
                    } else {
                        -c.u_max
                    }
                } else {
                    rng.random_range(-c.u_max..=c.u_max)
                };
                let next_phi = phi[j] + ts * vel[j];
                let next_v = vel[j] + ts * u;
                if next_v.abs() <= c.v_phi_max && brakes_safely(next_phi, next_v, ts, c) {
                    return u;
                }
            }
            brake[j]
        });
        phi += &vel * ts;
        vel += &u * ts;
        inputs.push(u);
    }
    (x, inputs)
}

fn criterion_7() -> Outcome {
    let (p, m, c) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let horizon = 20;
    let b = stopping_horizon(&c, p.ts);
    let none = FaultMask::none(p.n_joints());
    let (mut plans, mut failures, mut infeasible_premise) = (0, 0, 0);
    for _ in 0..10_000 {
        let (x0, inputs) = random_feasible_plan(&mut rng, &p, &c, horizon);
        let states = rollout(&x0, &inputs, &p, &m, &none).expect("rollout");
        let prev = CandidatePlan {
            inputs: inputs.clone(),
            source: CandidateSource::ShiftedPrevious,
            predicted_states: states.clone(),
        };
        if !certify(&prev, &c, CERTIFY_TOL).feasible {
            infeasible_premise += 1;
            continue;
        }
        plans += 1;
        let cand = shifted_candidate(&inputs, &states[1], horizon, b, &p, &m, &c, &none)
            .expect("shifted candidate");
        if !certify(&cand, &c, CERTIFY_TOL).feasible {
            failures += 1;
        }
    }

    // The construction only sees the joint double integrators, so it must
    // hold for any joint count.
    let mut per_size = Vec::new();
    for nj in 1..=16 {
        let params = RobotParams {
            n_links: nj + 1,
            ..RobotParams::default()
        };
        let mats = CouplingMatrices::new(params.n_links).expect("coupling matrices");
        let none = FaultMask::none(nj);
        let mut bad = 0;
        for _ in 0..200 {
            let (x0, inputs) = random_feasible_plan(&mut rng, &params, &c, horizon);
            let states = rollout(&x0, &inputs, &params, &mats, &none).expect("rollout");
            let cand =
                shifted_candidate(&inputs, &states[1], horizon, b, &params, &mats, &c, &none)
                    .expect("shifted candidate");
            if !certify(&cand, &c, CERTIFY_TOL).feasible {
                bad += 1;
            }
        }
        per_size.push(bad);
    }
    let size_failures: usize = per_size.iter().sum();
    let elapsed = start.elapsed();
    outcome(
        plans == 10_000 && failures == 0 && size_failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{plans} feasible plans ({infeasible_premise} rejected draws), {failures} uncertified candidates; \
             n_joints 1..=16 x 200 plans: {size_failures} failures; {elapsed:.1?}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let (p, m, c) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let start = Instant::now();
    let h = 1e-6;
    let horizon = 20;
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let nj = p.n_joints();
        let mut x = RobotState::zeros(nj);
        for j in 0..nj {
            x.phi[j] = rng.random_range(-2.0 * c.phi_max..=2.0 * c.phi_max);
            x.v_phi[j] = rng.random_range(-2.0 * c.v_phi_max..=2.0 * c.v_phi_max);
        }
        x.theta = rng.random_range(-3.0..3.0);
        x.v_theta = rng.random_range(-0.5..0.5);
        x.v_t = rng.random_range(-0.2..0.2);
        x.v_n = rng.random_range(-0.1..0.1);
        let inputs: Vec<DVector<f64>> = (0..horizon)
            .map(|_| DVector::from_fn(nj, |_, _| rng.random_range(-2.0 * c.u_max..=2.0 * c.u_max)))
            .collect();
        let gamma = if draw % 2 == 0 { 0.0 } else { 0.025 };
        let mask = if draw % 5 == 4 {
            FaultMask::single(nj, draw % nj)
        } else {
            FaultMask::none(nj)
        };
        let grad = cost_gradient(&x, &inputs, &p, &m, gamma, &mask).expect("gradient");
        for k in 0..horizon {
            for j in 0..nj {
                let mut plus = inputs.clone();
                let mut minus = inputs.clone();
                plus[k][j] += h;
                minus[k][j] -= h;
                let jp = rollout_cost(&x, &plus, &p, &m, gamma, &mask).expect("cost");
                let jm = rollout_cost(&x, &minus, &p, &m, gamma, &mask).expect("cost");
                let fd = (jp - jm) / (2.0 * h);
                let adj = grad[k][j];
                // Relative error with an absolute floor at the size of the
                // finite-difference rounding error.
                let err = (adj - fd).abs() / adj.abs().max(fd.abs()).max(1e-4);
                worst = worst.max(err);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        format!("100 draws x 160 components, worst relative error {worst:.2e}; {elapsed:.2?}"),
    )
}

fn criterion_9(empc: &RunOutput) -> Outcome {
    let (p, m, _) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs: Vec<DVector<f64>> = empc.trace[1..=300]
        .iter()
        .map(|r| r.input.clone())
        .collect();
    let x0 = empc.trace[0].state.clone();
    let mut mismatches = 0;
    for trial in 0..20 {
        let mut y = x0.clone();
        y.theta = rng.random_range(-1e3..1e3);
        y.v_theta = rng.random_range(-1e2..1e2);
        y.p_x = rng.random_range(-1e6..1e6);
        y.p_y = rng.random_range(-1e6..1e6);
        let sequence: Vec<DVector<f64>> = if trial == 0 {
            inputs.clone()
        } else {
            (0..300)
                .map(|_| DVector::from_fn(8, |_, _| rng.random_range(-0.3..0.3)))
                .collect()
        };
        let mut a = x0.clone();
        for u in &sequence {
            a = model::step(&a, u, &p, &m).expect("step");
            y = model::step(&y, u, &p, &m).expect("step");
            let same = a
                .phi
                .iter()
                .zip(y.phi.iter())
                .all(|(s, t)| s.to_bits() == t.to_bits())
                && a.v_phi
                    .iter()
                    .zip(y.v_phi.iter())
                    .all(|(s, t)| s.to_bits() == t.to_bits())
                && a.v_t.to_bits() == y.v_t.to_bits()
                && a.v_n.to_bits() == y.v_n.to_bits();
            if !same {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("20 perturbed runs x 300 steps: {mismatches} steps with any bit difference"),
    )
}

/// Highest normalized autocorrelation after the first zero crossing.
fn autocorrelation_peak(x: &[f64]) -> (f64, usize) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var: f64 = d.iter().map(|v| v * v).sum();
    let r = |lag: usize| -> f64 {
        let s: f64 = (0..n - lag).map(|i| d[i] * d[i + lag]).sum();
        s / var * n as f64 / (n - lag) as f64
    };
    let max_lag = n / 2;
    let first_neg = (1..max_lag).find(|&l| r(l) < 0.0).unwrap_or(max_lag);
    (first_neg..max_lag)
        .map(|l| (r(l), l))
        .fold((f64::NEG_INFINITY, 0), |best, cur| {
            if cur.0 > best.0 {
                cur
            } else {
                best
            }
        })
}

fn criterion_10(base: &Baselines) -> Outcome {
    let (_, _, c) = setup();
    let v_t: Vec<f64> = base.empc.trace[150..=300]
        .iter()
        .map(|r| r.state.v_t)
        .collect();
    let (peak, period) = autocorrelation_peak(&v_t);
    let empc_vphi = base
        .empc
        .trace
        .iter()
        .map(|r| r.state.v_phi.amax())
        .fold(0.0_f64, f64::max);
    let within = empc_vphi <= c.v_phi_max + 1e-6;
    let lu_violations = base
        .lu
        .trace
        .iter()
        .filter(|r| model::in_state_set(&r.state, &c, 0.0).1 > 0.0)
        .count();
    let lu_vphi = base
        .lu
        .trace
        .iter()
        .map(|r| r.state.v_phi.amax())
        .fold(0.0_f64, f64::max);
    outcome(
        peak > 0.95 && within && lu_violations > 0,
        format!(
            "v_t autocorrelation peak {peak:.4} at lag {period}; EMPC max |v_phi| {empc_vphi:.4} \
             (bound {}); LU state violations on {lu_violations} steps, max |v_phi| {lu_vphi:.4}",
            c.v_phi_max
        ),
    )
}

fn main() -> ExitCode {
    let (lu_runs, lu_time) = run("lu", &[]);
    let (empc_runs, empc_time) = run("empc", &[("gamma", "0")]);
    let base = Baselines {
        lu: lu_runs.into_iter().next().expect("lu run"),
        empc: empc_runs.into_iter().next().expect("empc run"),
        empc_time,
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("stopping horizon", Box::new(criterion_1)),
        ("LU baseline", Box::new(|| criterion_2(&base.lu, lu_time))),
        ("EMPC gamma = 0", Box::new(|| criterion_3(&base))),
        ("EMPC gamma = 0.025", Box::new(|| criterion_4(&base.lu))),
        ("fault comparison", Box::new(criterion_5)),
        ("stopping law monotonicity", Box::new(criterion_6)),
        ("shifted candidate feasibility", Box::new(criterion_7)),
        ("adjoint gradient", Box::new(criterion_8)),
        (
            "structural decoupling",
            Box::new(|| criterion_9(&base.empc)),
        ),
        (
            "periodic orbit and constraints",
            Box::new(|| criterion_10(&base)),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
