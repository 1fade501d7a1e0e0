//! The delay exponential function and its distribution.
//!
//! `dexp(-mu t; -mu tau)` is the delay analogue of `exp(-mu t)`: a truncated
//! power series whose n-th term switches on at `t = n*tau`. It solves the
//! scalar delay equation `y'(t) = -mu y(t - tau)` with `y(t) = 0` for `t < 0`
//! and `y(0) = 1`, stays constant at 1 on `[0, tau]`, and is a valid survival
//! function exactly when `mu*tau <= 1/e`. Beyond that bound it oscillates and
//! goes negative.
//!
//! This module evaluates the function, its waiting-time density, moments and
//! transforms, and the two real characteristic roots `W_0(-mu tau)/tau` and
//! `W_{-1}(-mu tau)/tau` expressed through the real branches of the Lambert W
//! function.
//!
//! # Evaluation strategy
//!
//! The series alternates with terms up to ten orders of magnitude larger than
//! the sum, so partial sums are formed in double-double arithmetic with all
//! intermediate powers and factorials carried in a scaled representation.
//! For distribution-valid parameters and `t/tau` beyond a fixed switch point
//! the series is replaced by the two-real-root resolvent expansion
//! `c0 exp(l0 t) + c1 exp(l1 t)`, whose truncation error (the nearest complex
//! root pair) is far below double precision there. Non-valid parameters fall
//! back to the capped series and report degraded accuracy past the documented
//! horizon.

use crate::dd::{two_prod, Dd, ScaledDd};
use thiserror::Error;

/// `1/e`, the validity bound for `mu*tau`.
pub const INV_E: f64 = 1.0 / std::f64::consts::E;

/// `t/tau` ratio beyond which evaluation switches to the characteristic-root
/// expansion (distribution-valid parameters only).
const TAIL_SWITCH_RATIO: f64 = 30.0;

/// Hard cap on series length for non-valid parameters.
const SERIES_TERM_LIMIT: u64 = 100_000;

/// Documented accuracy horizon for non-valid parameters: evaluation is
/// guaranteed to ~1e-10 absolute for `t/tau` up to this ratio.
pub const PRECISION_HORIZON_RATIO: f64 = 60.0;

/// Errors from the operations in this module.
#[derive(Debug, Error, PartialEq)]
pub enum DexpError {
    #[error("scale must be positive and finite, got mu = {0}")]
    InvalidScale(f64),
    #[error("delay must be non-negative and finite, got tau = {0}")]
    InvalidDelay(f64),
    #[error("mu*tau = {0} exceeds 1/e; not a valid waiting-time distribution")]
    NotADistribution(f64),
    #[error("moment generating function diverges at s = {0}")]
    MgfDiverges(f64),
    #[error("survival transform requires s > 0, got s = {0}")]
    NonPositiveTransformArg(f64),
    #[error("x = {x} is outside the domain of Lambert W branch {branch:?}")]
    LambertDomain { branch: Branch, x: f64 },
    #[error("characteristic roots require tau > 0 and mu*tau < 1/e, got mu*tau = {mu_tau}, tau = {tau}")]
    RootsUndefined { mu_tau: f64, tau: f64 },
}

/// Scale and delay of a delay exponential distribution.
///
/// Invariants (`mu > 0`, `tau >= 0`, both finite) are enforced at
/// construction. Distribution validity (`mu*tau <= 1/e`) is a separate,
/// queryable property: the function itself is defined for any parameters,
/// it just stops being a survival function beyond the bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DexpParams {
    mu: f64,
    tau: f64,
}

impl DexpParams {
    pub fn new(mu: f64, tau: f64) -> Result<Self, DexpError> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(DexpError::InvalidScale(mu));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(DexpError::InvalidDelay(tau));
        }
        Ok(DexpParams { mu, tau })
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// True iff `0 <= mu*tau <= 1/e` (closed condition).
    #[inline]
    pub fn is_distribution_valid(&self) -> bool {
        self.mu * self.tau <= INV_E
    }

    fn require_distribution(&self) -> Result<(), DexpError> {
        if self.is_distribution_valid() {
            Ok(())
        } else {
            Err(DexpError::NotADistribution(self.mu * self.tau))
        }
    }
}

/// Accuracy classification attached to an evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accuracy {
    /// Full double-precision guarantees apply.
    Full,
    /// Outside the documented horizon for non-valid parameters; the value may
    /// have lost absolute accuracy to cancellation.
    Degraded,
}

/// Evaluate `dexp(-mu t; -mu tau)`.
///
/// Returns 0 for `t < 0`, exactly 1 on `[0, tau]`, and `exp(-mu t)` when
/// `tau = 0`.
pub fn eval(t: f64, p: &DexpParams) -> f64 {
    eval_checked(t, p).0
}

/// Evaluate with an accuracy flag.
///
/// Distribution-valid parameters evaluate at full accuracy for every `t`.
/// Non-valid parameters are flagged [`Accuracy::Degraded`] once `|t/tau|`
/// exceeds [`PRECISION_HORIZON_RATIO`].
pub fn eval_checked(t: f64, p: &DexpParams) -> (f64, Accuracy) {
    debug_assert!(!t.is_nan());
    if t < 0.0 {
        return (0.0, Accuracy::Full);
    }
    if p.tau == 0.0 {
        return ((-p.mu * t).exp(), Accuracy::Full);
    }
    let ratio = t / p.tau;
    if p.is_distribution_valid() {
        if ratio <= TAIL_SWITCH_RATIO {
            (series(t, p.mu, p.tau).value(), Accuracy::Full)
        } else {
            (tail_expansion(t, p.mu, p.tau), Accuracy::Full)
        }
    } else {
        let (sum, capped) = series_capped(t, p.mu, p.tau);
        let acc = if capped || ratio > PRECISION_HORIZON_RATIO {
            Accuracy::Degraded
        } else {
            Accuracy::Full
        };
        (sum.value(), acc)
    }
}

/// Fast evaluation used by the quantile root finder. Falls back to the exact
/// path outside a small, well-conditioned region; inside it a plain f64 sum
/// is accurate to ~1e-14 absolute, which is tighter than the inversion
/// tolerance.
#[inline]
pub(crate) fn eval_fast(t: f64, p: &DexpParams) -> f64 {
    const FACT: [f64; 9] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0];
    if t < 0.0 {
        return 0.0;
    }
    if p.tau > 0.0 && p.mu * t <= 2.0 {
        let n_max = (t / p.tau).floor() as usize;
        if n_max < FACT.len() {
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for (n, &fact) in FACT.iter().enumerate().take(n_max + 1) {
                let s = t - n as f64 * p.tau;
                if s < 0.0 {
                    break;
                }
                let term = (-p.mu * s).powi(n as i32) / fact;
                let y = term - comp;
                let v = sum + y;
                comp = (v - sum) - y;
                sum = v;
            }
            return sum;
        }
    }
    eval(t, p)
}

/// Exact truncated series in double-double arithmetic. Only called with
/// `tau > 0`, `t >= 0`, and a term count small enough not to need a cap.
fn series(t: f64, mu: f64, tau: f64) -> Dd {
    series_capped(t, mu, tau).0
}

fn series_capped(t: f64, mu: f64, tau: f64) -> (Dd, bool) {
    let n_max_f = (t / tau).floor();
    let capped = n_max_f >= SERIES_TERM_LIMIT as f64;
    let n_max = if capped { SERIES_TERM_LIMIT } else { n_max_f as u64 };
    let t_dd = Dd::from_f64(t);
    let mut sum = Dd::ZERO;
    let mut factorial = ScaledDd::ONE;
    let mut max_mag = 0.0f64;
    let hump = mu * t;
    for n in 0..=n_max {
        // t - n*tau, exactly.
        let s = t_dd.sub(two_prod(n as f64, tau));
        if s.hi < 0.0 {
            break;
        }
        let base = ScaledDd::from_dd(s.mul_f64(-mu));
        let term = base.powi(n).div(factorial).to_dd();
        sum = sum.add(term);
        let mag = term.hi.abs();
        if mag > max_mag {
            max_mag = mag;
        } else if n as f64 > hump && mag < max_mag * 1e-45 {
            // Past the hump the terms decay superexponentially; the remaining
            // tail cannot move a double-double sum.
            break;
        }
        factorial = factorial.mul_f64((n + 1) as f64);
    }
    (sum, capped)
}

/// Two-real-root expansion for the deep tail, `c0 e^{l0 t} + c1 e^{l1 t}`
/// with `l_k = W_k(-mu tau)/tau` and `c_k = 1/(1 + W_k)`. Valid parameters
/// only; the nearest neglected (complex) root decays at least `e^{-3 t/tau}`
/// faster, which is negligible past the switch ratio.
fn tail_expansion(t: f64, mu: f64, tau: f64) -> f64 {
    let r = t / tau;
    let x = -mu * tau;
    // Squared half-distance to the branch point. Near the validity boundary
    // the roots coalesce and independently computed W values lose all their
    // digits in `1 + W`; switch to a formulation built directly from the
    // branch-point parameter p.
    let d = std::f64::consts::E.mul_add(x, 1.0);
    if d <= BRANCH_POINT_FUZZ {
        return near_confluent_tail(r, 0.0);
    }
    let p = (2.0 * d).sqrt();
    if p < 1e-4 {
        return near_confluent_tail(r, p);
    }
    let w0 = lambert_w(Branch::W0, x).expect("valid params imply x >= -1/e");
    let wm1 = lambert_w(Branch::Wm1, x).expect("valid params imply x in [-1/e, 0)");
    let l0t = w0 * r; // l0 * t
    if l0t < -745.0 {
        return 0.0;
    }
    let a_plus = 1.0 + w0; // 1 + l0*tau
    let a_minus = 1.0 + wm1; // 1 + l1*tau
    let q = ((wm1 - w0) * r).exp(); // e^{(l1 - l0) t} in (0, 1]
    l0t.exp() * (a_minus + a_plus * q) / (a_plus * a_minus)
}

/// Tail value close to (or at) the confluent double root `-1/tau`.
///
/// With `W0 = -1 + a` and `W-1 = -1 - b` from the branch-point series, the
/// expansion regroups as `e^{-r} [b expm1(a r) - a expm1(-b r) + (b - a)]
/// / (a b)`: every summand is positive, so no digits cancel, and the
/// `p -> 0` limit `(2r + 2/3) e^{-r}` of the double pole comes out exactly.
fn near_confluent_tail(r: f64, p: f64) -> f64 {
    let scale = if p == 0.0 {
        2.0 * r + 2.0 / 3.0
    } else {
        let a = p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)));
        let b = p * (1.0 + p * (1.0 / 3.0 + p * (11.0 / 72.0)));
        if (a - 1.0) * r < -745.0 {
            return 0.0;
        }
        let b_minus_a = p * p * (2.0 / 3.0 + p * p * (43.0 / 270.0));
        let num = b * (a * r).exp_m1() - a * (-b * r).exp_m1() + b_minus_a;
        num / (a * b)
    };
    let log_value = -r + scale.ln();
    if log_value < -745.0 {
        0.0
    } else {
        log_value.exp()
    }
}

/// Waiting-time density `psi(t) = mu * dexp(-mu (t - tau); -mu tau)`.
///
/// Zero for `t < tau`, exactly `mu` on `[tau, 2 tau)`. Rejects parameters
/// that are not a valid distribution.
pub fn density(t: f64, p: &DexpParams) -> Result<f64, DexpError> {
    p.require_distribution()?;
    Ok(p.mu * eval(t - p.tau, p))
}

/// Mean `1/mu` and variance `(1 - 2 mu tau)/mu^2` of the distribution.
pub fn moments(p: &DexpParams) -> Result<(f64, f64), DexpError> {
    p.require_distribution()?;
    let mean = 1.0 / p.mu;
    let variance = (1.0 - 2.0 * p.mu * p.tau) / (p.mu * p.mu);
    Ok((mean, variance))
}

/// Moment generating function `1 / (1 - s e^{-s tau} / mu)`.
///
/// Defined where the denominator is positive; the positive boundary of that
/// region is `s = -l0`, the decay rate of the distribution.
pub fn mgf(s: f64, p: &DexpParams) -> Result<f64, DexpError> {
    p.require_distribution()?;
    let denom = 1.0 - s * (-s * p.tau).exp() / p.mu;
    if denom <= 0.0 {
        return Err(DexpError::MgfDiverges(s));
    }
    Ok(1.0 / denom)
}

/// Laplace transform of the survival function, `1 / (s + mu e^{-s tau})`.
pub fn laplace_survival(s: f64, p: &DexpParams) -> Result<f64, DexpError> {
    if !(s > 0.0) {
        return Err(DexpError::NonPositiveTransformArg(s));
    }
    Ok(1.0 / (s + p.mu * (-s * p.tau).exp()))
}

/// Real branches of the Lambert W function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Principal branch, defined for `x >= -1/e`.
    W0,
    /// Lower real branch, defined for `x in [-1/e, 0)`.
    Wm1,
}

/// `1 + e*x` values at or below this are treated as the branch point itself:
/// a double cannot resolve distances to `-1/e` below rounding noise.
const BRANCH_POINT_FUZZ: f64 = 1e-16;

/// Lambert W on a real branch: the `w` with `w e^w = x`.
///
/// Halley iteration from a branch-appropriate starting point; stops once the
/// defining residual is at rounding level (well below 1e-14 relative). Very
/// close to the branch point the series in `p = sqrt(2(1 + e x))` is already
/// more accurate than the iteration can get and is returned directly.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64, DexpError> {
    let domain_err = || DexpError::LambertDomain { branch, x };
    if x.is_nan() {
        return Err(domain_err());
    }
    // 1 + e*x: the (squared, halved) distance to the branch point.
    let d = std::f64::consts::E.mul_add(x, 1.0);
    if d < -4e-16 {
        // Genuinely below -1/e for either branch.
        return Err(domain_err());
    }
    if d <= BRANCH_POINT_FUZZ {
        return Ok(-1.0);
    }
    let p = (2.0 * d).sqrt();
    let start = match branch {
        Branch::W0 => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if p < 1e-4 {
                return Ok(-1.0
                    + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0)))));
            }
            if x < -0.25 {
                -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)))
            } else if x < 6.0 {
                x.ln_1p()
            } else {
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        Branch::Wm1 => {
            if !(x < 0.0) {
                return Err(domain_err());
            }
            if p < 1e-4 {
                return Ok(-1.0
                    - p * (1.0 + p * (1.0 / 3.0 + p * (11.0 / 72.0 + p * (43.0 / 540.0)))));
            }
            if x < -0.25 {
                -1.0 - p * (1.0 + p * (1.0 / 3.0 + p * (11.0 / 72.0)))
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };
    Ok(halley(start, x, branch))
}

fn halley(mut w: f64, x: f64, branch: Branch) -> f64 {
    for _ in 0..100 {
        let ew = w.exp();
        let wew = w * ew;
        let f = wew - x;
        if f.abs() <= 1e-15 * (x.abs() + wew.abs()) {
            break;
        }
        let wp1 = w + 1.0;
        let halley_denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = if halley_denom.is_finite() && halley_denom != 0.0 {
            f / halley_denom
        } else if ew * wp1 != 0.0 {
            f / (ew * wp1)
        } else {
            break;
        };
        let mut next = w - step;
        // Stay on the branch.
        next = match branch {
            Branch::W0 => next.max(-1.0),
            Branch::Wm1 => next.min(-1.0),
        };
        if next == w {
            break;
        }
        w = next;
    }
    w
}

/// The two real roots of `l + mu e^{-l tau} = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacteristicRoots {
    /// Principal (larger, slower-decaying) root `W_0(-mu tau)/tau`.
    pub lambda0: f64,
    /// Secondary root `W_{-1}(-mu tau)/tau`.
    pub lambda_neg1: f64,
}

/// Real characteristic roots of the delay equation `y' = -mu y(t - tau)`.
///
/// Requires `tau > 0` and strictly `mu*tau < 1/e`; at the boundary the two
/// branches coalesce and the roots are no longer distinct.
pub fn characteristic_roots(p: &DexpParams) -> Result<CharacteristicRoots, DexpError> {
    let mu_tau = p.mu * p.tau;
    if !(p.tau > 0.0) || !(mu_tau < INV_E) {
        return Err(DexpError::RootsUndefined { mu_tau, tau: p.tau });
    }
    let x = -mu_tau;
    let w0 = lambert_w(Branch::W0, x)?;
    let wm1 = lambert_w(Branch::Wm1, x)?;
    Ok(CharacteristicRoots {
        lambda0: w0 / p.tau,
        lambda_neg1: wm1 / p.tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, tau: f64) -> DexpParams {
        DexpParams::new(mu, tau).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(DexpParams::new(0.0, 0.1), Err(DexpError::InvalidScale(0.0)));
        assert_eq!(
            DexpParams::new(-1.0, 0.1),
            Err(DexpError::InvalidScale(-1.0))
        );
        assert_eq!(
            DexpParams::new(1.0, -0.1),
            Err(DexpError::InvalidDelay(-0.1))
        );
        assert!(DexpParams::new(f64::NAN, 0.1).is_err());
        assert!(DexpParams::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn constant_one_before_the_delay() {
        let p = params(1.0, 0.7);
        assert_eq!(eval(0.5, &p), 1.0);
        assert_eq!(eval(0.0, &p), 1.0);
        assert_eq!(eval(0.7, &p), 1.0);
    }

    #[test]
    fn two_term_value_at_twice_the_delay() {
        let p = params(1.0, 0.3);
        assert!((eval(0.6, &p) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn exponential_limit_at_zero_delay() {
        let p = params(1.0, 0.0);
        assert!((eval(1.0, &p) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_for_negative_argument() {
        let p = params(1.0, 0.3);
        assert_eq!(eval(-0.1, &p), 0.0);
        assert_eq!(eval(-1e-300, &p), 0.0);
    }

    #[test]
    fn validity_condition() {
        assert!(params(1.0, 0.3).is_distribution_valid());
        assert!(!params(1.0, 0.7).is_distribution_valid());
        assert!(params(1.0, INV_E).is_distribution_valid());
    }

    #[test]
    fn density_values() {
        let p = params(1.0, 0.7);
        // Not distribution-valid: rejected.
        assert!(density(0.5, &p).is_err());
        let p = params(1.0, 0.3);
        assert_eq!(density(0.2, &p).unwrap(), 0.0);
        assert!((density(0.4, &p).unwrap() - 1.0).abs() < 1e-15);
        let p = params(2.0, 0.0);
        assert!((density(0.2, &p).unwrap() - 2.0 * (-0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn density_is_mu_on_first_active_interval() {
        let p = params(1.0, 0.7);
        assert!(density(1.0, &p).is_err());
        let p = params(0.5, 0.7); // mu*tau = 0.35 valid
        assert_eq!(density(0.5, &p).unwrap(), 0.0);
        assert!((density(1.0, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moment_formulas() {
        let (m, v) = moments(&params(2.0, 0.1)).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((v - 0.15).abs() < 1e-15);
        let (m, v) = moments(&params(1.0, 0.0)).unwrap();
        assert_eq!((m, v), (1.0, 1.0));
        let (m, v) = moments(&params(1.0, 0.3)).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        assert!((v - 0.4).abs() < 1e-15);
        assert!(moments(&params(1.0, 0.7)).is_err());
    }

    #[test]
    fn mgf_values() {
        let p = params(1.0, 0.3);
        assert_eq!(mgf(0.0, &p).unwrap(), 1.0);
        let p0 = params(1.0, 0.0);
        assert!((mgf(-1.0, &p0).unwrap() - 0.5).abs() < 1e-15);
        // Divergence at/above the decay rate.
        assert!(mgf(2.0, &p0).is_err());
    }

    #[test]
    fn laplace_survival_values() {
        let p0 = params(1.0, 0.0);
        assert!((laplace_survival(1.0, &p0).unwrap() - 0.5).abs() < 1e-15);
        let p = params(1.0, 0.3);
        let expected = 1.0 / (1.0 + (-0.3f64).exp());
        assert!((laplace_survival(1.0, &p).unwrap() - expected).abs() < 1e-15);
        assert!(laplace_survival(0.0, &p).is_err());
        assert!(laplace_survival(-1.0, &p).is_err());
    }

    #[test]
    fn lambert_w_basics() {
        assert_eq!(lambert_w(Branch::W0, 0.0).unwrap(), 0.0);
        assert_eq!(lambert_w(Branch::W0, -INV_E).unwrap(), -1.0);
        assert_eq!(lambert_w(Branch::Wm1, -INV_E).unwrap(), -1.0);
        let w = lambert_w(Branch::W0, -0.3).unwrap();
        assert!((w * w.exp() + 0.3).abs() <= 1e-12);
        let w = lambert_w(Branch::Wm1, -0.3).unwrap();
        assert!((w * w.exp() + 0.3).abs() <= 1e-12);
        assert!(w < -1.0);
        // Known value: W0(1) = 0.5671432904097838...
        let w = lambert_w(Branch::W0, 1.0).unwrap();
        assert!((w - 0.567_143_290_409_783_8).abs() < 1e-14);
    }

    #[test]
    fn lambert_w_domains() {
        assert!(lambert_w(Branch::W0, -0.4).is_err());
        assert!(lambert_w(Branch::Wm1, 0.0).is_err());
        assert!(lambert_w(Branch::Wm1, 0.5).is_err());
        assert!(lambert_w(Branch::Wm1, -0.4).is_err());
    }

    #[test]
    fn characteristic_roots_identity() {
        let p = params(1.0, 0.3);
        let roots = characteristic_roots(&p).unwrap();
        for l in [roots.lambda0, roots.lambda_neg1] {
            assert!((l + p.mu() * (-l * p.tau()).exp()).abs() <= 1e-10);
            assert!(l < 0.0);
        }
        assert!(roots.lambda0 > roots.lambda_neg1);
    }

    #[test]
    fn principal_root_approaches_minus_mu() {
        let p = params(1.0, 1e-6);
        let roots = characteristic_roots(&p).unwrap();
        assert!((roots.lambda0 + 1.0).abs() < 1e-5);
    }

    #[test]
    fn roots_rejected_at_boundary_and_zero_delay() {
        assert!(characteristic_roots(&params(1.0, INV_E)).is_err());
        assert!(characteristic_roots(&params(1.0, 0.7)).is_err());
        assert!(characteristic_roots(&params(1.0, 0.0)).is_err());
    }

    #[test]
    fn tail_expansion_matches_series() {
        // The series is mathematically exact for any t; evaluate it past the
        // switch ratio and compare against the root expansion.
        for &mu_tau in &[1e-6, 0.01, 0.1, 0.2, 0.3, 0.36, INV_E] {
            let mu = 1.0;
            let tau = mu_tau / mu;
            for &r in &[31.0, 35.0, 40.0] {
                let t = r * tau;
                let from_series = series(t, mu, tau).value();
                let from_tail = tail_expansion(t, mu, tau);
                let scale = from_series.abs().max(1e-300);
                assert!(
                    ((from_series - from_tail) / scale).abs() < 1e-8,
                    "mu*tau={mu_tau} r={r}: series={from_series:e} tail={from_tail:e}"
                );
            }
        }
    }

    #[test]
    fn eval_is_continuous_across_the_switch() {
        let p = params(1.0, 0.3);
        let below = eval(0.3 * (TAIL_SWITCH_RATIO - 1e-9), &p);
        let above = eval(0.3 * (TAIL_SWITCH_RATIO + 1e-9), &p);
        assert!(((below - above) / below).abs() < 1e-6);
    }

    #[test]
    fn degraded_flag_only_beyond_horizon_for_invalid_params() {
        let valid = params(1.0, 0.3);
        assert_eq!(eval_checked(100.0, &valid).1, Accuracy::Full);
        let invalid = params(1.0, 0.7);
        assert_eq!(eval_checked(10.0 * 0.7, &invalid).1, Accuracy::Full);
        assert_eq!(eval_checked(61.0 * 0.7, &invalid).1, Accuracy::Degraded);
    }

    #[test]
    fn negative_values_beyond_validity_bound() {
        let p = params(1.0, 0.7);
        let min = (0..=1000)
            .map(|i| eval(7.0 * i as f64 / 1000.0, &p))
            .fold(f64::INFINITY, f64::min)
            .min(f64::INFINITY);
        assert!(min < 0.0);
    }

    #[test]
    fn fast_eval_agrees_with_exact() {
        let p = params(1.0, 0.3);
        for i in 0..200 {
            let t = i as f64 * 0.01;
            assert!((eval_fast(t, &p) - eval(t, &p)).abs() < 1e-13);
        }
    }
}
