//! Solver accuracy against closed forms and cross-checks between the
//! deterministic and function-evaluation code paths.

use dexpsim::dde::{build_dde, solve};
use dexpsim::dexp;
use dexpsim::model::{self, DelayProcess, ModelSpec, Target};
use dexpsim::DexpParams;

fn delay_burst(mu: f64, tau: f64, x0: u64, horizon: f64) -> ModelSpec {
    let mut spec = ModelSpec::new(&["X"], &[x0], horizon);
    spec.delays.push(DelayProcess {
        source: 0,
        target: Target::Sink,
        params: DexpParams::new(mu, tau).unwrap(),
    });
    spec
}

#[test]
fn delay_burst_solution_is_the_survival_function() {
    // dx/dt = -mu x(t - tau) with a unit burst: the fundamental solution.
    // Integrator and series evaluation are fully independent code paths.
    let spec = delay_burst(1.0, 0.3, 1000, 8.0);
    let sys = build_dde(&spec).unwrap();
    let sol = solve(&sys, 8.0, 0.01).unwrap();
    let p = DexpParams::new(1.0, 0.3).unwrap();
    let mut worst = 0.0f64;
    for (k, &t) in sol.times().iter().enumerate() {
        worst = worst.max((sol.value(k, 0) - 1000.0 * dexp::eval(t, &p)).abs());
    }
    assert!(worst <= 1e-6 * 1000.0, "max deviation {worst:e}");
}

#[test]
fn first_derivative_jumps_only_at_the_delay() {
    // For a burst straight into the delay compartment the slope is 0 on the
    // left of tau and -mu x0 on the right; later breakpoints are smooth at
    // first order.
    let (mu, tau) = (0.5, 0.5);
    let spec = delay_burst(mu, tau, 1, 4.0);
    let sys = build_dde(&spec).unwrap();
    let sol = solve(&sys, 4.0, 0.005).unwrap();
    let h = 5e-3;
    let one_sided = |t: f64| {
        let left = (sol.eval(0, t) - sol.eval(0, t - h)) / h;
        let right = (sol.eval(0, t + h) - sol.eval(0, t)) / h;
        (left, right)
    };
    let (left, right) = one_sided(tau);
    assert!((left - 0.0).abs() < 1e-6, "left slope {left}");
    assert!((right + mu).abs() < 2e-3, "right slope {right}");
    // At 2 tau and at generic interior points the derivative is continuous.
    for t in [2.0 * tau, 0.77, 1.4] {
        let (l, r) = one_sided(t);
        assert!((l - r).abs() < 2e-2, "slope jump {l} vs {r} at t={t}");
    }
}

#[test]
fn pk_target_compartment_is_smooth_at_tau() {
    // A(0) = 0, so the delayed clearance switches on continuously: A stays
    // C^1 at t = tau (the jump appears in the second derivative).
    let spec = model::preset_pk(1.0, 1.0, 0.2, 100).unwrap();
    let sys = build_dde(&spec).unwrap();
    let sol = solve(&sys, 2.0, 0.002).unwrap();
    // One-sided differences carry O(h |A''|) truncation with |A''| ~ 200
    // here; the observed gap must shrink to that scale, far below the
    // -mu k x0 = -100 jump a discontinuous A' would show.
    let h = 2e-4;
    let left = (sol.eval(1, 0.2) - sol.eval(1, 0.2 - h)) / h;
    let right = (sol.eval(1, 0.2 + h) - sol.eval(1, 0.2)) / h;
    assert!((left - right).abs() < 0.05, "A' jump at tau: {left} vs {right}");
}

#[test]
fn sis_conserves_population_with_equal_birth_and_death() {
    for tau in [0.0, 0.2, 0.35] {
        let spec = model::preset_sis(0.1, 0.1, 2.0 / 2000.0, 1.0, tau, 1900, 100).unwrap();
        let sys = build_dde(&spec).unwrap();
        let sol = solve(&sys, 30.0, 0.005).unwrap();
        for (k, _) in sol.times().iter().enumerate() {
            let total = sol.value(k, 0) + sol.value(k, 1);
            assert!(
                (total - 2000.0).abs() <= 1e-6 * 2000.0,
                "tau={tau}: population drift {}",
                total - 2000.0
            );
        }
    }
}

#[test]
fn preset_solutions_stay_nonnegative() {
    let pk = model::preset_pk(1.0, 1.0, 0.35, 100).unwrap();
    let sys = build_dde(&pk).unwrap();
    let sol = solve(&sys, 10.0, 0.005).unwrap();
    for (k, _) in sol.times().iter().enumerate() {
        for c in 0..2 {
            assert!(sol.value(k, c) >= -1e-9);
        }
    }
    let sis = model::preset_sis(0.1, 0.1, 2.0 / 100.0, 1.0, 0.35, 95, 5).unwrap();
    let sys = build_dde(&sis).unwrap();
    let sol = solve(&sys, 30.0, 0.005).unwrap();
    for (k, _) in sol.times().iter().enumerate() {
        for c in 0..2 {
            assert!(sol.value(k, c) >= -1e-9);
        }
    }
}

#[test]
fn dense_output_matches_mesh_values() {
    let spec = model::preset_pk(1.0, 1.0, 0.2, 100).unwrap();
    let sys = build_dde(&spec).unwrap();
    let sol = solve(&sys, 5.0, 0.01).unwrap();
    for (k, &t) in sol.times().iter().enumerate().step_by(17) {
        for c in 0..2 {
            assert_eq!(sol.eval(c, t), sol.value(k, c));
        }
    }
    // Continuity across an interval boundary.
    let t = sol.times()[100];
    let eps = 1e-9;
    assert!((sol.eval(1, t - eps) - sol.eval(1, t + eps)).abs() < 1e-6);
}
