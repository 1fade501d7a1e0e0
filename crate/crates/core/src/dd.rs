//! Double-double arithmetic for the truncated power series.
//!
//! The series behind [`crate::dexp::eval`] alternates in sign with terms that
//! can be ten or more orders of magnitude larger than the sum, so plain f64
//! accumulation loses the result to cancellation long before the tail of the
//! survival function decays. A double-double value carries ~106 significand
//! bits, which keeps the absolute error near `eps^2 * max|term|`.
//!
//! Only the handful of operations the series needs are implemented. The
//! algorithms are the classical error-free transformations (Knuth's two-sum,
//! FMA-based two-prod) and Dekker/Bailey-style composite operations.

/// An unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum of two doubles.
#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

/// Error-free sum assuming `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

/// Error-free product via fused multiply-add.
#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let mut lo = s.lo + t.hi;
        let r = quick_two_sum(s.hi, lo);
        lo = r.lo + t.lo;
        quick_two_sum(r.hi, lo)
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Dd {
        let s = two_sum(self.hi, b);
        let lo = s.lo + self.lo;
        quick_two_sum(s.hi, lo)
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let mut p = two_prod(self.hi, o.hi);
        p.lo += self.hi * o.lo + self.lo * o.hi;
        quick_two_sum(p.hi, p.lo)
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Dd {
        let mut p = two_prod(self.hi, b);
        p.lo += self.lo * b;
        quick_two_sum(p.hi, p.lo)
    }

    #[inline]
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = (r.hi + r.lo) / o.hi;
        quick_two_sum(q1, q2)
    }
}

/// Exact scaling by a power of two (result may round only on under/overflow).
pub(crate) fn ldexp(x: f64, e: i64) -> f64 {
    // Chunked so each factor stays a normal double.
    const CHUNK: i64 = 512;
    let mut r = x;
    let mut e = e;
    while e > CHUNK {
        r *= pow2(CHUNK);
        e -= CHUNK;
    }
    while e < -CHUNK {
        r *= pow2(-CHUNK);
        e += CHUNK;
    }
    r * pow2(e)
}

/// 2^e for |e| <= 1022, constructed from bits.
#[inline]
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// A double-double mantissa with a separate binary exponent.
///
/// Intermediate powers and factorials in the series overflow f64 well inside
/// the parameter ranges we must support; the final *terms* do not. Keeping the
/// exponent out of band makes every intermediate representable.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ScaledDd {
    m: Dd,
    exp: i64,
}

impl ScaledDd {
    pub const ONE: ScaledDd = ScaledDd { m: Dd::ONE, exp: 0 };

    pub fn from_dd(m: Dd) -> ScaledDd {
        ScaledDd { m, exp: 0 }.normalized()
    }

    pub fn is_zero(self) -> bool {
        self.m.hi == 0.0
    }

    /// Bring `m.hi` into `+-[1, 2)`.
    fn normalized(mut self) -> ScaledDd {
        if self.m.hi == 0.0 {
            return ScaledDd { m: Dd::ZERO, exp: 0 };
        }
        let bits = self.m.hi.abs().to_bits();
        let mut biased = (bits >> 52) as i64;
        if biased == 0 {
            // Subnormal: rescale first so the exponent field is meaningful.
            self.m.hi = ldexp(self.m.hi, 80);
            self.m.lo = ldexp(self.m.lo, 80);
            self.exp -= 80;
            biased = (self.m.hi.abs().to_bits() >> 52) as i64;
        }
        let k = biased - 1023;
        if k != 0 {
            self.m.hi = ldexp(self.m.hi, -k);
            self.m.lo = ldexp(self.m.lo, -k);
            self.exp += k;
        }
        self
    }

    pub fn mul(self, o: ScaledDd) -> ScaledDd {
        ScaledDd {
            m: self.m.mul(o.m),
            exp: self.exp + o.exp,
        }
        .normalized()
    }

    pub fn mul_f64(self, b: f64) -> ScaledDd {
        ScaledDd {
            m: self.m.mul_f64(b),
            exp: self.exp,
        }
        .normalized()
    }

    pub fn div(self, o: ScaledDd) -> ScaledDd {
        ScaledDd {
            m: self.m.div(o.m),
            exp: self.exp - o.exp,
        }
        .normalized()
    }

    /// Integer power by binary exponentiation.
    pub fn powi(self, n: u64) -> ScaledDd {
        let mut result = ScaledDd::ONE;
        let mut base = self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(base);
            }
        }
        result
    }

    /// Collapse to a plain double-double; underflows to zero quietly.
    pub fn to_dd(self) -> Dd {
        if self.is_zero() || self.exp < -1100 {
            return Dd::ZERO;
        }
        Dd {
            hi: ldexp(self.m.hi, self.exp),
            lo: ldexp(self.m.lo, self.exp),
        }
    }
}
