//! Engine-level checks against analytically known ensembles.

use dexpsim::dexp;
use dexpsim::model::{DelayProcess, MarkovianProcess, ModelSpec, RateLaw, Source, Target};
use dexpsim::ssa::{run_ensemble, run_path, EventKind};
use dexpsim::{DexpParams, RngStream};

fn delay_only(mu: f64, tau: f64, x0: u64, horizon: f64) -> ModelSpec {
    let mut spec = ModelSpec::new(&["X"], &[x0], horizon);
    spec.delays.push(DelayProcess {
        source: 0,
        target: Target::Sink,
        params: DexpParams::new(mu, tau).unwrap(),
    });
    spec
}

#[test]
fn delay_only_ensemble_follows_the_survival_function() {
    // A burst of particles whose only exit is the delayed channel: the
    // expected count is x0 * survival(t).
    let spec = delay_only(1.0, 0.3, 1000, 5.0);
    let summary = run_ensemble(&spec, 500, 2718).unwrap();
    let p = DexpParams::new(1.0, 0.3).unwrap();
    for (j, &t) in summary.grid.iter().enumerate() {
        let expected = 1000.0 * dexp::eval(t, &p);
        let tol = 4.0 * summary.stderr_at(j, 0) + 1e-9;
        let got = summary.mean_at(j, 0);
        assert!(
            (got - expected).abs() <= tol,
            "t={t}: mean {got} vs {expected} (tol {tol})"
        );
    }
}

#[test]
fn delay_exit_probability_against_quadrature() {
    // Delay channel in competition with a per-capita death at rate d: each
    // particle independently exits through the delay with probability
    // integral of e^{-d t} psi(t) dt. This is where the e^{-d tau} survival
    // weight in the deterministic equations comes from.
    let (mu, tau, d) = (1.0, 0.3, 0.1);
    let x0: u64 = 100_000;
    let mut spec = delay_only(mu, tau, x0, 30.0);
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(0),
        target: Target::Sink,
        law: RateLaw::PerCapita { coefficient: d, of: 0 },
    });

    let traj = run_path(&spec, RngStream::new(40_000, 0)).unwrap();
    assert_eq!(
        traj.count(traj.n_points() - 1, 0),
        0,
        "all particles must have exited by the horizon"
    );
    let events = traj.events.as_ref().unwrap();
    assert_eq!(events.len() as u64, x0);
    let via_delay = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Delay { .. }))
        .count() as f64;
    let p_hat = via_delay / x0 as f64;

    // Simpson quadrature of e^{-d t} psi(t) over the smooth pieces.
    let params = DexpParams::new(mu, tau).unwrap();
    let mut p_quad = 0.0;
    let mut a = tau;
    while a < 30.0 {
        let b = (a + tau).min(30.0);
        let panels = 64;
        let h = (b - a) / panels as f64;
        let f = |t: f64| (-d * t).exp() * dexp::density(t, &params).unwrap();
        let mut acc = f(a) + f(b);
        for i in 1..panels {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        p_quad += acc * h / 3.0;
        a = b;
    }

    let se = (p_quad * (1.0 - p_quad) / x0 as f64).sqrt();
    assert!(
        (p_hat - p_quad).abs() <= 3.0 * se,
        "p_hat {p_hat} vs quadrature {p_quad} (3se = {})",
        3.0 * se
    );
}

#[test]
fn mixed_delay_and_death_paths_keep_invariants() {
    // The engine aborts on any clock-count mismatch; a run to completion is
    // the conservation check.
    let mut spec = delay_only(1.0, 0.25, 500, 20.0);
    spec.markov.push(MarkovianProcess {
        source: Source::Compartment(0),
        target: Target::Sink,
        law: RateLaw::PerCapita { coefficient: 0.5, of: 0 },
    });
    for stream in 0..8 {
        let traj = run_path(&spec, RngStream::new(5, stream)).unwrap();
        let events = traj.events.as_ref().unwrap();
        assert!(events.windows(2).all(|w| w[1].time >= w[0].time));
        // No delay channel may fire before tau.
        assert!(events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Delay { .. }))
            .all(|e| e.time >= 0.25));
    }
}

#[test]
fn sis_preset_runs_and_conserves_population_in_law() {
    let spec = dexpsim::model::preset_sis(0.1, 0.1, 2.0 / 100.0, 1.0, 0.2, 95, 5)
        .unwrap()
        .with_horizon(10.0);
    let summary = run_ensemble(&spec, 200, 77).unwrap();
    // b = d: expected total population is constant at P0 = 100. The ensemble
    // mean of S + I should hover near 100 well within a few standard errors.
    for (j, _) in summary.grid.iter().enumerate() {
        let total = summary.mean_at(j, 0) + summary.mean_at(j, 1);
        let tol = 4.0 * (summary.stderr_at(j, 0) + summary.stderr_at(j, 1)) + 1e-9;
        assert!((total - 100.0).abs() <= tol, "grid {j}: total {total}");
    }
}
