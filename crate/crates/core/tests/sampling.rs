//! Distributional checks on the waiting-time sampler.

use dexpsim::dexp;
use dexpsim::sampler::{sample_dexp, UNIFORM_FLOOR};
use dexpsim::{DexpParams, DexpQuantileTable, RngStream};
use proptest::prelude::*;

fn table(mu: f64, tau: f64) -> DexpQuantileTable {
    DexpQuantileTable::new(DexpParams::new(mu, tau).unwrap()).unwrap()
}

#[test]
fn empirical_survival_within_dkw_band() {
    let t = table(1.0, 0.3);
    let p = *t.params();
    let n = 100_000usize;
    let mut rng = RngStream::new(314, 0);
    let mut draws: Vec<f64> = (0..n).map(|_| sample_dexp(&mut rng, &t)).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // 99% two-sided Dvoretzky-Kiefer-Wolfowitz band.
    let eps = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let x = 8.0 * i as f64 / 49.0;
        let above = draws.partition_point(|&d| d <= x);
        let empirical = (n - above) as f64 / n as f64;
        let exact = dexp::eval(x, &p);
        worst = worst.max((empirical - exact).abs());
    }
    assert!(worst <= eps, "sup deviation {worst} exceeds DKW band {eps}");
}

#[test]
fn clamped_draws_stay_reproducible_across_clones() {
    let t = table(2.0, 0.15);
    let mut a = RngStream::new(99, 7);
    let mut b = a.clone();
    for _ in 0..1000 {
        let x = sample_dexp(&mut a, &t);
        let y = sample_dexp(&mut b, &t);
        assert!(x.to_bits() == y.to_bits());
    }
}

#[test]
fn sample_moments_match_formulas() {
    // Modest-size Monte Carlo; the acceptance suite runs the full-size one.
    let t = table(1.0, 0.3);
    let n = 200_000usize;
    let mut rng = RngStream::new(56, 0);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let x = sample_dexp(&mut rng, &t);
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    let (m_exact, v_exact) = dexp::moments(t.params()).unwrap();
    assert!((mean - m_exact).abs() <= 4.0 * (v_exact / n as f64).sqrt());
    assert!((var - v_exact).abs() <= 0.02 * v_exact);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn support_starts_at_the_delay(
        mu in 0.1f64..5.0,
        frac in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let tau = frac * dexp::INV_E / mu;
        let t = table(mu, tau);
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..200 {
            let draw = sample_dexp(&mut rng, &t);
            prop_assert!(draw >= tau, "draw {draw} below tau {tau}");
            prop_assert!(draw.is_finite());
        }
    }

    #[test]
    fn inversion_residual_bound(
        mu in 0.1f64..5.0,
        frac in 0.01f64..=1.0,
        u in UNIFORM_FLOOR..1.0,
    ) {
        let tau = frac * dexp::INV_E / mu;
        let t = table(mu, tau);
        let q = dexpsim::sampler::quantile_from_survival(u, &t);
        prop_assert!((dexp::eval(q, t.params()) - u).abs() <= 1e-10);
    }
}
