//! Log-gamma for positive real arguments.
//!
//! Large arguments use the Stirling series directly; small arguments are
//! shifted upward with the recurrence `Γ(x+1) = x Γ(x)`. Around the two zeros
//! of ln Γ (x = 1 and x = 2) a Taylor expansion in zeta values keeps the
//! *relative* error small where the shifted Stirling value would cancel.

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Stirling is used for x >= this.
const STIRLING_MIN: f64 = 10.0;

/// Half-width of the Taylor window around 1 and 2.
const TAYLOR_RADIUS: f64 = 0.2;

/// B_{2k} / (2k (2k-1)) for k = 1..=8.
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// ζ(k) for k = 2..=30.
const ZETA: [f64; 29] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_37,
    1.017_343_061_984_449_1,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
    1.000_494_188_604_119_5,
    1.000_246_086_553_308,
    1.000_122_713_347_578_5,
    1.000_061_248_135_058_7,
    1.000_030_588_236_307,
    1.000_015_282_259_408_7,
    1.000_007_637_197_637_9,
    1.000_003_817_293_265,
    1.000_001_908_212_716_6,
    1.000_000_953_962_033_9,
    1.000_000_476_932_986_8,
    1.000_000_238_450_502_7,
    1.000_000_119_219_926,
    1.000_000_059_608_189,
    1.000_000_029_803_503_5,
    1.000_000_014_901_554_8,
    1.000_000_007_450_711_8,
    1.000_000_003_725_334,
    1.000_000_001_862_659_7,
    1.000_000_000_931_327_4,
];

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "log_gamma argument",
            value: x,
        });
    }
    Ok(ln_gamma(x))
}

/// Unchecked ln Γ(x); the caller guarantees x > 0 and finite.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    if x >= STIRLING_MIN {
        return stirling(x);
    }
    if (x - 1.0).abs() <= TAYLOR_RADIUS {
        return ln_gamma_1p(x - 1.0);
    }
    if (x - 2.0).abs() <= TAYLOR_RADIUS {
        // ln Γ(2+e) = ln(1+e) + ln Γ(1+e)
        let e = x - 2.0;
        return e.ln_1p() + ln_gamma_1p(e);
    }
    let mut y = x;
    let mut prod = 1.0;
    while y < STIRLING_MIN {
        prod *= y;
        y += 1.0;
    }
    stirling(y) - prod.ln()
}

/// ln n! for integer n.
#[inline]
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for &c in STIRLING_COEFFS.iter().rev() {
        series = series * inv2 + c;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series * inv
}

/// ln Γ(1+e) for small |e|.
fn ln_gamma_1p(e: f64) -> f64 {
    // -γ e + Σ_{k>=2} (-1)^k ζ(k) e^k / k
    let mut sum = 0.0;
    let mut pow = -e;
    for (i, &z) in ZETA.iter().enumerate() {
        let k = (i + 2) as f64;
        pow *= -e;
        sum += z * pow / k;
    }
    -EULER_GAMMA * e + sum
}
