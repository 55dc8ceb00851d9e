//! Heisenberg evolution of the three-mode interaction and its reduction to
//! single/compound-field parameters.
//!
//! The operator vector `(a0, a1†, a2†)` obeys a linear system `d/dt v = A v`
//! with
//!
//! ```text
//!     A = [[ 0,    0,   −iγ0 ],
//!          [ 0,    0,    iγ1*],
//!          [ iγ0*, iγ1,  0   ]]
//! ```
//!
//! so `v(t) = exp(tA) v(0)`. Every second moment of the output fields is a
//! vacuum expectation of a quadratic form in the entries of `exp(tA)`.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::GsnParams;

type C3 = Matrix3<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Down-conversion coupling.
    pub gamma0: Complex64,
    /// Frequency-conversion (parametric amplification) coupling.
    pub gamma1: Complex64,
    pub t: f64,
    pub modes: f64,
}

impl CouplingConfig {
    pub fn new(gamma0: Complex64, gamma1: Complex64, t: f64, modes: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain {
                what: "interaction time",
                value: t,
            });
        }
        if !(modes > 0.0) || !modes.is_finite() {
            return Err(Error::Domain {
                what: "number of modes",
                value: modes,
            });
        }
        for g in [gamma0, gamma1] {
            if !g.re.is_finite() || !g.im.is_finite() {
                return Err(Error::InvalidParams(format!("coupling {g} is not finite")));
            }
        }
        Ok(CouplingConfig {
            gamma0,
            gamma1,
            t,
            modes,
        })
    }

    pub fn real(gamma0: f64, gamma1: f64, t: f64, modes: f64) -> Result<Self> {
        Self::new(
            Complex64::new(gamma0, 0.0),
            Complex64::new(gamma1, 0.0),
            t,
            modes,
        )
    }

    pub fn generator(&self) -> C3 {
        let i = Complex64::i();
        let z = Complex64::new(0.0, 0.0);
        let (g0, g1) = (self.gamma0, self.gamma1);
        Matrix3::new(z, z, -i * g0, z, z, i * g1.conj(), i * g0.conj(), i * g1, z)
    }
}

/// `U(t)` acting on `(a0, a1†, a2†)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BogoliubovMatrix(pub C3);

impl BogoliubovMatrix {
    pub fn identity() -> Self {
        BogoliubovMatrix(C3::identity())
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// Commutator residuals of the three rows: `[a0, a0†] − 1`,
    /// `[a1, a1†] − 1` and `[a2, a2†] − 1`.
    pub fn commutator_residuals(&self) -> [f64; 3] {
        let u = &self.0;
        let n = |i: usize, j: usize| u[(i, j)].norm_sqr();
        [
            n(0, 0) - n(0, 1) - n(0, 2) - 1.0,
            -n(1, 0) + n(1, 1) + n(1, 2) - 1.0,
            -n(2, 0) + n(2, 1) + n(2, 2) - 1.0,
        ]
    }

    pub fn compose(&self, earlier: &BogoliubovMatrix) -> BogoliubovMatrix {
        BogoliubovMatrix(self.0 * earlier.0)
    }
}

/// Per-mode second moments of the three generated fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriModeGsn {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// ⟨Δa0 Δa1⟩
    pub d01: Complex64,
    /// ⟨Δa0 Δa2⟩
    pub d02: Complex64,
    /// −⟨Δa1† Δa2⟩
    pub d12bar: Complex64,
}

impl TriModeGsn {
    pub fn k01(&self) -> f64 {
        self.b0 * self.b1 - self.d01.norm_sqr()
    }
    pub fn k02(&self) -> f64 {
        self.b0 * self.b2 - self.d02.norm_sqr()
    }
    pub fn k12(&self) -> f64 {
        self.b1 * self.b2 - self.d12bar.norm_sqr()
    }

    /// Intensity (co)variances of the three fields for `modes` independent
    /// temporal modes: `[[var W0, cov W0W1, cov W0W2], …]`.
    pub fn intensity_covariances(&self, modes: f64) -> [[f64; 3]; 3] {
        let v0 = modes * self.b0 * self.b0;
        let v1 = modes * self.b1 * self.b1;
        let v2 = modes * self.b2 * self.b2;
        let c01 = modes * self.d01.norm_sqr();
        let c02 = modes * self.d02.norm_sqr();
        let c12 = modes * self.d12bar.norm_sqr();
        [[v0, c01, c02], [c01, v1, c12], [c02, c12, v2]]
    }
}

/// Intensity second moments of the single and compound fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityCovariances {
    pub var0: f64,
    pub var12: f64,
    pub cov: f64,
}

pub fn evolve(config: &CouplingConfig) -> BogoliubovMatrix {
    BogoliubovMatrix(expm(&(config.generator() * Complex64::new(config.t, 0.0))))
}

pub fn coefficients(u: &BogoliubovMatrix) -> TriModeGsn {
    let u = &u.0;
    TriModeGsn {
        b0: u[(0, 1)].norm_sqr() + u[(0, 2)].norm_sqr(),
        b1: u[(1, 0)].norm_sqr(),
        b2: u[(2, 0)].norm_sqr(),
        d01: u[(0, 0)] * u[(1, 0)].conj(),
        d02: u[(0, 0)] * u[(2, 0)].conj(),
        d12bar: -u[(1, 0)] * u[(2, 0)].conj(),
    }
}

/// Reduces to the single field `a0` and compound field `a1 + a2`.
pub fn compound(tri: &TriModeGsn, modes: f64) -> Result<GsnParams> {
    let b12 = tri.b1 + tri.b2 - 2.0 * tri.d12bar.re;
    let scale = (tri.b1 + tri.b2).max(1.0);
    if b12 < -1e-12 * scale {
        return Err(Error::InvalidParams(format!(
            "compound-field B12 = {b12} is negative; phase convention inconsistent"
        )));
    }
    let b12 = b12.max(0.0);
    let d = (tri.d01 + tri.d02).norm();
    GsnParams::new(tri.b0, b12, d, modes)
}

/// `evolve`, `coefficients` and `compound` in one call.
pub fn predict(config: &CouplingConfig) -> Result<(BogoliubovMatrix, TriModeGsn, GsnParams)> {
    if config.gamma1.im != 0.0 {
        log::warn!(
            "gamma1 = {} is not real; compound reduction uses the phase-general formula",
            config.gamma1
        );
    }
    let u = evolve(config);
    let tri = coefficients(&u);
    let g = compound(&tri, config.modes)?;
    Ok((u, tri, g))
}

pub fn intensity_covariances(g: &GsnParams) -> IntensityCovariances {
    let m = g.modes();
    IntensityCovariances {
        var0: m * g.b0() * g.b0(),
        var12: m * g.b12() * g.b12(),
        cov: m * g.d012() * g.d012(),
    }
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(a: &C3) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &C3) -> C3 {
    let nrm = norm1(a);
    let squarings = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * Complex64::new(2f64.powi(-squarings), 0.0);
    let c = |k: usize| Complex64::new(PADE13[k], 0.0);
    let id = C3::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let u_inner =
        a6 * (a6 * c(13) + a4 * c(11) + a2 * c(9)) + a6 * c(7) + a4 * c(5) + a2 * c(3) + id * c(1);
    let u = a * u_inner;
    let v =
        a6 * (a6 * c(12) + a4 * c(10) + a2 * c(8)) + a6 * c(6) + a4 * c(4) + a2 * c(2) + id * c(0);
    let mut r = (v - u)
        .lu()
        .solve(&(v + u))
        .expect("Padé denominator is nonsingular within the scaling bound");
    for _ in 0..squarings {
        r = r * r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rk4(cfg: &CouplingConfig, steps: usize) -> C3 {
        let a = cfg.generator();
        let h = Complex64::new(cfg.t / steps as f64, 0.0);
        let half = Complex64::new(0.5, 0.0);
        let sixth = Complex64::new(1.0 / 6.0, 0.0);
        let two = Complex64::new(2.0, 0.0);
        let mut u = C3::identity();
        for _ in 0..steps {
            let k1 = a * u;
            let k2 = a * (u + k1 * (h * half));
            let k3 = a * (u + k2 * (h * half));
            let k4 = a * (u + k3 * h);
            u += (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        }
        u
    }

    fn max_diff(a: &C3, b: &C3) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_time_is_identity() {
        let u = evolve(&CouplingConfig::real(1.0, 0.7, 0.0, 1.0).unwrap());
        assert!(max_diff(&u.0, &C3::identity()) == 0.0);
        let tri = coefficients(&u);
        assert_eq!((tri.b0, tri.b1, tri.b2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn squeezer_limit() {
        let (g, t) = (0.8, 1.7);
        let cfg = CouplingConfig::real(g, 0.0, t, 1.0).unwrap();
        let u = evolve(&cfg);
        assert!((u.entry(0, 0).norm() - (g * t).cosh()).abs() < 1e-12);
        assert!((u.entry(0, 2).norm() - (g * t).sinh()).abs() < 1e-12);
        assert_eq!(u.entry(0, 1).norm(), 0.0);
        let tri = coefficients(&u);
        let s2 = (g * t).sinh().powi(2);
        assert!((tri.b0 - s2).abs() < 1e-11 && (tri.b2 - s2).abs() < 1e-11);
        assert_eq!(tri.b1, 0.0);
        assert!((tri.d02.norm() - (g * t).cosh() * (g * t).sinh()).abs() < 1e-11);
        assert_eq!(tri.d01.norm(), 0.0);
        let p = compound(&tri, 1.0).unwrap();
        assert!((p.b12() - tri.b2).abs() < 1e-12);
        assert!((p.k012() + tri.b2).abs() < 1e-9);
    }

    #[test]
    fn matches_ode_integration() {
        let cfg = CouplingConfig::real(1.0, 0.7, 1.3, 1.0).unwrap();
        let u = evolve(&cfg);
        let v = rk4(&cfg, 20_000);
        assert!(max_diff(&u.0, &v) < 1e-9, "{}", max_diff(&u.0, &v));
        for r in u.commutator_residuals() {
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn determinant_identities() {
        let cfg = CouplingConfig::real(1.0, 0.7, 1.3, 1.0).unwrap();
        let (_, tri, g) = predict(&cfg).unwrap();
        assert!(tri.k12().abs() < 1e-10 * tri.b1 * tri.b2);
        assert!((tri.k01() + tri.b1).abs() < 1e-9);
        assert!((tri.k02() + tri.b2).abs() < 1e-9);
        assert!((tri.b0 - tri.b1 - tri.b2).abs() < 1e-9);
        assert!((g.k012() + tri.b1 + tri.b2).abs() < 1e-9);
    }

    #[test]
    fn large_argument_needs_squaring() {
        let cfg = CouplingConfig::real(2.0, 1.5, 4.0, 1.0).unwrap();
        let u = evolve(&cfg);
        let v = rk4(&cfg, 200_000);
        let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_diff(&u.0, &v) < 1e-10 * scale);
    }

    #[test]
    fn vacuum_compound_is_zero() {
        let tri = coefficients(&BogoliubovMatrix::identity());
        let g = compound(&tri, 3.0).unwrap();
        assert_eq!((g.b0(), g.b12(), g.d012(), g.k012()), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn covariances_closed_form() {
        let g = GsnParams::new(87.765104, 92.861384, 90.371968, 13.3665).unwrap();
        let c = intensity_covariances(&g);
        assert!((c.var0 - 102_958.32).abs() < 0.01, "{}", c.var0);
        let z = intensity_covariances(&GsnParams::new(0.0, 0.0, 0.0, 2.0).unwrap());
        assert_eq!((z.var0, z.var12, z.cov), (0.0, 0.0, 0.0));
    }
}
