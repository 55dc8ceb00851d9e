//! Signed log-space values and cancellation-aware summation.

use serde::{Deserialize, Serialize};

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// Default cancellation threshold in nats.
pub const DEFAULT_CANCELLATION_NATS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Zero => 0.0,
            Sign::Positive => 1.0,
        }
    }
}

/// A real number stored as sign and natural log of its magnitude.
///
/// The log is kept as an unevaluated sum `hi + lo` so that encoding and
/// decoding an `f64` is exact to within an ulp; arithmetic uses `hi + lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogValue {
    hi: f64,
    lo: f64,
    sign: Sign,
}

impl SignedLogValue {
    pub const ZERO: SignedLogValue = SignedLogValue {
        hi: f64::NEG_INFINITY,
        lo: 0.0,
        sign: Sign::Zero,
    };

    /// From a log-magnitude and a sign; a zero sign forces the zero sentinel.
    pub fn from_log(log_magnitude: f64, sign: Sign) -> Self {
        if sign == Sign::Zero || log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        SignedLogValue {
            hi: log_magnitude,
            lo: 0.0,
            sign,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            return Self::ZERO;
        }
        let sign = if x > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        };
        let (m, e) = frexp(x.abs());
        // |x| = m 2^e with m in [1, 2); ln|x| = e ln2 + ln m
        let e = e as f64;
        let a = e * LN2_HI;
        let b = e * LN2_LO + m.ln();
        let hi = a + b;
        let lo = b - (hi - a);
        SignedLogValue { hi, lo, sign }
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == Sign::Zero {
            return 0.0;
        }
        let k = (self.hi / std::f64::consts::LN_2).floor();
        let r = (self.hi - k * LN2_HI) - k * LN2_LO + self.lo;
        let mag = ldexp(r.exp(), k as i32);
        self.sign.as_f64() * mag
    }

    pub fn log_magnitude(self) -> f64 {
        self.hi + self.lo
    }

    pub fn sign(self) -> Sign {
        self.sign
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn mul(self, other: SignedLogValue) -> SignedLogValue {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        let sign = if self.sign == other.sign {
            Sign::Positive
        } else {
            Sign::Negative
        };
        SignedLogValue {
            hi: self.hi + other.hi,
            lo: self.lo + other.lo,
            sign,
        }
    }
}

/// Result of [`signed_log_sum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    pub value: SignedLogValue,
    /// ln(max |term|) − ln|sum|; +∞ on exact cancellation of nonzero terms.
    pub cancellation: f64,
    pub flagged: bool,
}

/// Sums signed log-space terms with the default 30-nat cancellation flag.
pub fn signed_log_sum(terms: &[SignedLogValue]) -> LogSum {
    signed_log_sum_with(terms, DEFAULT_CANCELLATION_NATS)
}

pub fn signed_log_sum_with(terms: &[SignedLogValue], threshold: f64) -> LogSum {
    let max = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.log_magnitude())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogSum {
            value: SignedLogValue::ZERO,
            cancellation: 0.0,
            flagged: false,
        };
    }
    let mut pos = Neumaier::default();
    let mut neg = Neumaier::default();
    for t in terms {
        match t.sign {
            Sign::Positive => pos.add((t.log_magnitude() - max).exp()),
            Sign::Negative => neg.add((t.log_magnitude() - max).exp()),
            Sign::Zero => {}
        }
    }
    let (p, n) = (pos.total(), neg.total());
    let diff = p - n;
    if diff == 0.0 {
        return LogSum {
            value: SignedLogValue::ZERO,
            cancellation: f64::INFINITY,
            flagged: true,
        };
    }
    let sign = if diff > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    };
    let log_abs = max + diff.abs().ln();
    let cancellation = max - log_abs;
    LogSum {
        value: SignedLogValue::from_log(log_abs, sign),
        cancellation,
        flagged: cancellation > threshold,
    }
}

/// ln Σ exp(x_i) over finite-or-−∞ inputs.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut acc = Neumaier::default();
    for &v in values {
        acc.add((v - max).exp());
    }
    max + acc.total().ln()
}

/// Compensated (Kahan–Babuška–Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn frexp(x: f64) -> (f64, i32) {
    // x > 0, finite. Returns m in [1, 2) and e with x = m 2^e.
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        // subnormal: renormalise
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1023 << 52));
    (m, exp - 1023)
}

fn ldexp(x: f64, e: i32) -> f64 {
    // split to stay within the normal exponent range
    if e > 1000 {
        x * 2f64.powi(1000) * 2f64.powi(e - 1000)
    } else if e < -1000 {
        x * 2f64.powi(-1000) * 2f64.powi(e + 1000)
    } else {
        x * 2f64.powi(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn exact_cancellation_is_flagged() {
        let e = SignedLogValue::from_log(1.0, Sign::Positive);
        let ne = SignedLogValue::from_log(1.0, Sign::Negative);
        let s = signed_log_sum(&[e, ne]);
        assert!(s.value.is_zero());
        assert!(s.flagged);
        assert_eq!(s.cancellation, f64::INFINITY);
    }

    #[test]
    fn identity_and_empty() {
        let one = SignedLogValue::from_log(0.0, Sign::Positive);
        let s = signed_log_sum(&[one]);
        assert_eq!(s.value.log_magnitude(), 0.0);
        assert_eq!(s.value.sign(), Sign::Positive);
        assert!(!s.flagged);
        assert!(signed_log_sum(&[]).value.is_zero());
    }

    #[test]
    fn zero_sentinel() {
        let z = SignedLogValue::from_f64(0.0);
        assert_eq!(z.sign(), Sign::Zero);
        assert_eq!(z.log_magnitude(), f64::NEG_INFINITY);
        assert_eq!(z.to_f64(), 0.0);
        assert!(SignedLogValue::from_log(3.0, Sign::Zero).is_zero());
    }

    #[test]
    fn round_trip_across_range() {
        let mut x = 1e-300_f64;
        while x < 1e300 {
            for &v in &[x, -x * 1.37, x * 7.000_000_1] {
                let back = SignedLogValue::from_f64(v).to_f64();
                assert!(ulps(back, v) <= 1, "{v:e} -> {back:e}");
            }
            x *= 3.7;
        }
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1_f64.ln(), 0.2_f64.ln(), 0.7_f64.ln()];
        assert!(log_sum_exp(&v).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
