//! s-ordered joint quasi-distributions of the integrated intensities `W0`,
//! `W12`, the ordering threshold separating the regular and generalized
//! forms, and the Mandel photodetection transform used as an independent
//! oracle for the joint photon-number distribution.
//!
//! With `B_is = B_i + (1 − s)/2` and `K_s = B0s·B12s − D²`:
//!
//! ```text
//! K_s > 0:  P_s = (W0 W12)^(M−1) / (Γ(M) K_s^M)
//!                 · exp[−(B12s W0 + B0s W12)/K_s] · Ĩ_{M−1}(2D√(W0 W12)/K_s)
//! K_s < 0:  P_s ≈ A (W0 W12)^((M−1)/2) / (π Γ(M) (B0s B12s)^(M/2))
//!                 · exp(−W0/2B0s − W12/2B12s)
//!                 · sinc[A(√(B12s/B0s) W0 − √(B0s/B12s) W12)],  A = (−K_s)^(−1/2)
//! ```
//!
//! where `Ĩ_ν(x) = I_ν(x)/(x/2)^ν`. The second form is an approximation of a
//! generalized function and is labelled as such.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{mandel_rice_upper_tail, JointPN};
use crate::error::{Error, Result};
use crate::numerics::{
    ln_factorial, ln_gamma, log_bessel_i_reduced, quad2d_vec, QuadOptions, Rect,
};
use crate::params::GsnParams;

/// Half-width of the rejection band around `K_s = 0`, relative to `B0s·B12s`.
pub const EPS_K_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedParams {
    pub base: GsnParams,
    pub s: f64,
    pub b0s: f64,
    pub b12s: f64,
    pub k012s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Regular,
    GeneralizedApprox,
}

impl OrderedParams {
    pub fn new(base: &GsnParams, s: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&s) {
            return Err(Error::Domain {
                what: "ordering parameter s",
                value: s,
            });
        }
        let shift = 0.5 * (1.0 - s);
        let b0s = base.b0() + shift;
        let b12s = base.b12() + shift;
        // K + shift·(B0 + B12) + shift² keeps the exact determinant at s = 1
        let k012s = base.k012() + shift * (base.b0() + base.b12()) + shift * shift;
        Ok(OrderedParams {
            base: *base,
            s,
            b0s,
            b12s,
            k012s,
        })
    }

    pub fn eps_k(&self) -> f64 {
        EPS_K_REL * self.b0s * self.b12s
    }

    /// Branch selected by the sign of `K_s`; errors inside the rejection band.
    pub fn branch(&self) -> Result<Branch> {
        let band = self.eps_k();
        if self.k012s.abs() <= band {
            return Err(Error::NearThreshold {
                k012s: self.k012s,
                band,
            });
        }
        Ok(if self.k012s > 0.0 {
            Branch::Regular
        } else {
            Branch::GeneralizedApprox
        })
    }

    /// Default axis extent `M·B_is + 10·√M·B_is` per axis.
    pub fn auto_extent(&self) -> (f64, f64) {
        let m = self.base.modes();
        let f = m + 10.0 * m.sqrt();
        (f * self.b0s, f * self.b12s)
    }

    /// Quasi-density at one point, by the branch formula.
    pub fn density(&self, w0: f64, w12: f64) -> Result<f64> {
        if !(w0 >= 0.0) || !(w12 >= 0.0) {
            return Err(Error::Domain {
                what: "integrated intensity",
                value: w0.min(w12),
            });
        }
        Ok(match self.branch()? {
            Branch::Regular => self.log_regular(w0, w12).exp(),
            Branch::GeneralizedApprox => self.generalized(w0, w12),
        })
    }

    fn log_regular(&self, w0: f64, w12: f64) -> f64 {
        let m = self.base.modes();
        let k = self.k012s;
        let d = self.base.d012();
        let x = 2.0 * d * (w0 * w12).sqrt() / k;
        let power = if m == 1.0 {
            0.0
        } else {
            (m - 1.0) * (w0.ln() + w12.ln())
        };
        -ln_gamma(m) - m * k.ln() + power - (self.b12s * w0 + self.b0s * w12) / k
            + log_bessel_i_reduced(m - 1.0, x)
    }

    fn generalized(&self, w0: f64, w12: f64) -> f64 {
        let m = self.base.modes();
        let a = (-self.k012s).powf(-0.5);
        let ratio = (self.b12s / self.b0s).sqrt();
        let arg = a * (ratio * w0 - w12 / ratio);
        let sinc = if arg.abs() < 1e-8 {
            1.0
        } else {
            arg.sin() / arg
        };
        let power = if m == 1.0 {
            0.0
        } else {
            0.5 * (m - 1.0) * (w0.ln() + w12.ln())
        };
        let log_pref = a.ln() + power
            - std::f64::consts::PI.ln()
            - ln_gamma(m)
            - 0.5 * m * (self.b0s * self.b12s).ln()
            - 0.5 * w0 / self.b0s
            - 0.5 * w12 / self.b12s;
        log_pref.exp() * sinc
    }
}

/// Ordering parameter at which `K_s` vanishes.
pub fn s_threshold(g: &GsnParams) -> Result<f64> {
    let sum = g.b0() + g.b12();
    let disc = sum * sum - 4.0 * g.k012();
    // s_th = 1 − 2a with a the nonnegative root of a² + (B0+B12) a + K = 0;
    // the root is formed without cancellation for either sign of K
    let a = if g.k012() == 0.0 {
        0.0
    } else {
        -2.0 * g.k012() / (sum + disc.sqrt())
    };
    let s = 1.0 - 2.0 * a;
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::ThresholdOutOfRange(s));
    }
    Ok(s)
}

/// Evaluation axes for a quasi-distribution grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiAxes {
    pub w0: Vec<f64>,
    pub w12: Vec<f64>,
}

impl QuasiAxes {
    pub fn new(w0: Vec<f64>, w12: Vec<f64>) -> Result<Self> {
        if w0.is_empty() || w12.is_empty() {
            return Err(Error::EmptyInput("quasi-distribution axis"));
        }
        if let Some(&bad) = w0
            .iter()
            .chain(&w12)
            .find(|w| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Domain {
                what: "integrated intensity axis",
                value: bad,
            });
        }
        Ok(QuasiAxes { w0, w12 })
    }

    /// `points` equally spaced nodes on `[0, extent]` per axis.
    pub fn uniform(extent0: f64, extent12: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::EmptyInput(
                "quasi-distribution axis needs two points",
            ));
        }
        let line = |e: f64| {
            (0..points)
                .map(|i| e * i as f64 / (points - 1) as f64)
                .collect()
        };
        Self::new(line(extent0), line(extent12))
    }

    pub fn auto(q: &OrderedParams, points: usize) -> Result<Self> {
        let (e0, e12) = q.auto_extent();
        Self::uniform(e0, e12, points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiGrid {
    pub ordered: OrderedParams,
    pub w0: Vec<f64>,
    pub w12: Vec<f64>,
    /// Row-major, `values[i·w12.len() + j]` at `(w0[i], w12[j])`.
    pub values: Vec<f64>,
    pub branch: Branch,
}

impl QuasiGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.w12.len() + j]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn has_negative(&self) -> bool {
        self.values.iter().any(|&v| v < 0.0)
    }
}

pub fn quasi_grid(g: &GsnParams, s: f64, axes: &QuasiAxes) -> Result<QuasiGrid> {
    let q = OrderedParams::new(g, s)?;
    let branch = q.branch()?;
    let n12 = axes.w12.len();
    let values: Vec<f64> = (0..axes.w0.len() * n12)
        .into_par_iter()
        .map(|idx| q.density(axes.w0[idx / n12], axes.w12[idx % n12]))
        .collect::<Result<_>>()?;
    Ok(QuasiGrid {
        ordered: q,
        w0: axes.w0.clone(),
        w12: axes.w12.clone(),
        values,
        branch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularMoments {
    pub mean_w0: f64,
    pub mean_w12: f64,
    pub normalization: f64,
}

/// Normalization and first moments of the regular-branch density, integrated
/// over the rectangle spanned by the grid axes.
pub fn regular_moments(q: &QuasiGrid) -> Result<RegularMoments> {
    if q.branch != Branch::Regular {
        return Err(Error::InvalidParams(
            "regular_moments requires a regular-branch grid".into(),
        ));
    }
    let x1 = q.w0.iter().copied().fold(0.0, f64::max);
    let y1 = q.w12.iter().copied().fold(0.0, f64::max);
    let o = q.ordered;
    let est = integrate_substituted(
        |w0, w12, out| {
            let p = o.log_regular(w0, w12).exp();
            out[0] = p;
            out[1] = w0 * p;
            out[2] = w12 * p;
        },
        3,
        x1,
        y1,
        substitution_power(o.base.modes()),
        1e-9 * (1.0 + x1 + y1),
    )?;
    Ok(RegularMoments {
        normalization: est[0],
        mean_w0: est[1],
        mean_w12: est[2],
    })
}

/// Exponent `p` of the substitution `W = u^p` that turns the `W^(M−1)` edge
/// behaviour into at least a linear factor `u^(pM−1)`.
fn substitution_power(modes: f64) -> f64 {
    (2.0 / modes).max(2.0)
}

/// ∬_[0,x1]×[0,y1] f dW0 dW12 with W = u^p on both axes.
fn integrate_substituted<F>(
    f: F,
    dim: usize,
    x1: f64,
    y1: f64,
    p: f64,
    tol: f64,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, &mut [f64]),
{
    let rect = Rect::new(0.0, x1.powf(1.0 / p), 0.0, y1.powf(1.0 / p));
    let opts = QuadOptions {
        abs_tol: tol,
        max_subdivisions: 200_000,
    };
    let est = quad2d_vec(
        |u, v, out: &mut [f64]| {
            let (du, dv) = (u.powf(p - 1.0), v.powf(p - 1.0));
            f(du * u, dv * v, out);
            let jac = p * p * du * dv;
            out.iter_mut().for_each(|o| *o *= jac);
        },
        dim,
        rect,
        opts,
    )?;
    Ok(est.values)
}

/// Joint photon-number distribution on `[0, n0_max] × [0, n12_max]` by
/// integrating the classical (`s = 1`) intensity density against Poisson
/// photodetection kernels. Only defined when `K012 > 0`.
pub fn mandel_transform(g: &GsnParams, n0_max: u64, n12_max: u64, abs_tol: f64) -> Result<JointPN> {
    let q = OrderedParams::new(g, 1.0)?;
    if q.branch()? != Branch::Regular {
        return Err(Error::NonclassicalParams(g.k012()));
    }
    let m = g.modes();
    let extent = |b: f64, n: u64| {
        (b * (2.0 * m + 45.0)).max(n as f64 + 12.0 * (n as f64 + 1.0).sqrt() + 40.0)
    };
    let x1 = extent(g.b0(), n0_max);
    let y1 = extent(g.b12(), n12_max);
    let w0n = (n0_max + 1) as usize;
    let w12n = (n12_max + 1) as usize;
    let lf0: Vec<f64> = (0..=n0_max).map(ln_factorial).collect();
    let lf12: Vec<f64> = (0..=n12_max).map(ln_factorial).collect();
    let values = integrate_substituted(
        |w0, w12, out| {
            let lp = q.log_regular(w0, w12) - w0 - w12;
            if lp < -745.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            let (l0, l12) = (w0.ln(), w12.ln());
            // the kernel factorizes; the extents keep each factor inside f64 range
            let a: Vec<f64> = (0..w0n)
                .map(|n| (lp + poisson_log(n, l0, &lf0)).exp())
                .collect();
            let b: Vec<f64> = (0..w12n)
                .map(|n| poisson_log(n, l12, &lf12).exp())
                .collect();
            for (row, ai) in out.chunks_exact_mut(w12n).zip(&a) {
                row.iter_mut().zip(&b).for_each(|(o, bj)| *o = ai * bj);
            }
        },
        w0n * w12n,
        x1,
        y1,
        substitution_power(m),
        abs_tol,
    )?;
    let tail =
        mandel_rice_upper_tail(n0_max, g.b0(), m) + mandel_rice_upper_tail(n12_max, g.b12(), m);
    Ok(JointPN::from_dense_probs(
        *g, n0_max, n12_max, &values, tail,
    ))
}

/// `n ln W − ln n!` with the convention `0·ln 0 = 0`.
fn poisson_log(n: usize, ln_w: f64, lf: &[f64]) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * ln_w - lf[n]
    }
}
