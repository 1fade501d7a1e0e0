//! Waiting-time sampling.
//!
//! Delay-exponential waiting times are drawn by numerically inverting the
//! survival function: a table of its values at integer multiples of the delay
//! brackets the root, and a safeguarded Newton iteration (bisection fallback)
//! polishes it to a 1e-12 residual in the uniform variate. Markovian holding
//! times are plain exponential inversions.
//!
//! Randomness comes from counter-based ChaCha streams keyed by a `(seed,
//! stream_id)` pair, so replica ensembles get statistically independent,
//! bit-reproducible sequences regardless of scheduling.

use crate::dexp::{self, DexpError, DexpParams};
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Uniform draws are clamped into `[UNIFORM_FLOOR, 1 - 1e-16]` before
/// inversion. The truncated tail mass (at most 1e-12) keeps waiting times
/// inside the precisely evaluable region of the survival function.
pub const UNIFORM_FLOOR: f64 = 1e-12;
const UNIFORM_CEIL: f64 = 1.0 - 1e-16;

/// Residual tolerance on the uniform variate for the quantile root find.
const INVERSION_TOL: f64 = 1e-12;

/// Breakpoint tables stop here; deeper tails invert through log-linear
/// extrapolation plus Newton polish.
const TABLE_CAP: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("total rate must be non-negative, got {0}")]
    NegativeRate(f64),
}

/// A reproducible, independently seeded random stream.
///
/// Identical `(seed, stream_id)` pairs replay identical draw sequences;
/// distinct stream ids select distinct counter-mode streams of the same
/// keyed generator and are statistically independent.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha12Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng, seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform index in `0..len`.
    #[inline]
    pub(crate) fn index(&mut self, len: usize) -> usize {
        debug_assert!(len > 0);
        (self.next_u64() % len as u64) as usize
    }

    #[inline]
    fn uniform_clamped(&mut self) -> f64 {
        self.uniform().clamp(UNIFORM_FLOOR, UNIFORM_CEIL)
    }
}

/// Precomputed survival values at integer multiples of the delay.
///
/// Built once per parameter set, immutable afterwards, and freely shared
/// between threads. The values are strictly decreasing from index 1 on, so a
/// binary search brackets every quantile between consecutive breakpoints.
#[derive(Clone, Debug)]
pub struct DexpQuantileTable {
    params: DexpParams,
    breakpoints: Vec<f64>,
}

impl DexpQuantileTable {
    /// Rejects parameter sets that are not a valid distribution.
    pub fn new(params: DexpParams) -> Result<Self, DexpError> {
        if !params.is_distribution_valid() {
            return Err(DexpError::NotADistribution(params.mu() * params.tau()));
        }
        let mut breakpoints = Vec::new();
        if params.tau() > 0.0 {
            for n in 0..=TABLE_CAP {
                let v = dexp::eval(n as f64 * params.tau(), &params);
                breakpoints.push(v);
                if v <= UNIFORM_FLOOR {
                    break;
                }
            }
        }
        Ok(DexpQuantileTable { params, breakpoints })
    }

    pub fn params(&self) -> &DexpParams {
        &self.params
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

/// Draw one delay-exponential waiting time.
///
/// Every draw is at least `tau`: the distribution has no mass below the
/// delay. For `tau = 0` this reduces to an exact exponential inversion.
pub fn sample_dexp(rng: &mut RngStream, table: &DexpQuantileTable) -> f64 {
    let u = rng.uniform_clamped();
    quantile_from_survival(u, table)
}

/// Draw a Markovian holding time with the given total rate.
///
/// A zero rate returns `+inf`: the survival function never reaches zero and
/// no event can fire.
pub fn sample_markov_holding(rng: &mut RngStream, total_rate: f64) -> Result<f64, SamplerError> {
    if !(total_rate >= 0.0) {
        return Err(SamplerError::NegativeRate(total_rate));
    }
    if total_rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(exponential_from_survival(rng.uniform(), total_rate))
}

#[inline]
fn exponential_from_survival(u: f64, rate: f64) -> f64 {
    let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
    -u.ln() / rate
}

/// The generalized inverse `t = inf { s : survival(s) <= u }`.
///
/// On the linear segment `[tau, 2 tau]` (that is, for `u >= 1 - mu tau`) the
/// inverse is returned in closed form `tau + (1 - u)/mu`.
pub fn quantile_from_survival(u: f64, table: &DexpQuantileTable) -> f64 {
    let p = *table.params();
    let (mu, tau) = (p.mu(), p.tau());
    debug_assert!(u > 0.0 && u < 1.0);
    if tau == 0.0 {
        return exponential_from_survival(u, mu);
    }
    if u >= 1.0 - mu * tau {
        return tau + (1.0 - u) / mu;
    }
    let v = table.breakpoints();
    let last = v.len() - 1;
    let (lo, hi, start) = if u >= v[last] {
        // Bracket between consecutive breakpoints; v[k-1] > u >= v[k].
        let k = v.partition_point(|&s| s > u);
        debug_assert!(k >= 2 && k <= last);
        let lo = (k - 1) as f64 * tau;
        let hi = k as f64 * tau;
        let start = lo + tau * (v[k - 1] - u) / (v[k - 1] - v[k]);
        (lo, hi, start.clamp(lo, hi))
    } else {
        // Deeper than the table: extrapolate log-linearly from the last two
        // breakpoints, then expand until the root is bracketed.
        let lo = last as f64 * tau;
        let ratio = v[last] / v[last - 1];
        let guess = lo + tau * (u / v[last]).ln() / ratio.ln();
        let mut step = (guess - lo).max(tau);
        let mut hi = guess + step;
        for _ in 0..200 {
            if dexp::eval_fast(hi, &p) <= u {
                break;
            }
            hi += step;
            step *= 2.0;
        }
        (lo, hi, guess.clamp(lo, hi))
    };
    newton_invert(u, &p, lo, hi, start)
}

/// Safeguarded Newton on `survival(t) - u` over a sign bracket. The slope is
/// the delay identity `survival'(t) = -mu * survival(t - tau)`.
fn newton_invert(u: f64, p: &DexpParams, mut lo: f64, mut hi: f64, mut t: f64) -> f64 {
    let mu = p.mu();
    let tau = p.tau();
    for _ in 0..200 {
        let f = dexp::eval_fast(t, p) - u;
        if f.abs() <= INVERSION_TOL {
            return t;
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = -mu * dexp::eval_fast(t - tau, p);
        let mut next = if slope < 0.0 { t - f / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == t {
            return t;
        }
        t = next;
    }
    t
}
