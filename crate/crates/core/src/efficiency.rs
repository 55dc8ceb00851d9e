//! Degradation of conditional state preparation by finite detection
//! efficiency.
//!
//! Detection with efficiencies `η0`, `η12` maps the photon-level parameters
//! by `B0 → η0·B0`, `B12 → η12·B12`, `D² → η0·η12·D²` (so `K → η0·η12·K`) with
//! the mode number unchanged. The asymptotic conditional Fano factor
//! `F∞ = 1 + (B12+K)/(1+B0) + K/B0` evaluated on the scaled parameters drops
//! below one exactly when `η0 > −(B0·B12 + K)/(2·K·B0)`, independently of `η12`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{fano_closed, fano_limit};
use crate::error::{Error, Result};
use crate::params::GsnParams;

/// Contour cells with `F∞` above this value are reported as missing.
pub const CONTOUR_CEILING: f64 = 2.0;

/// Final bracket width of the efficiency bisections.
const BISECT_WIDTH: f64 = 1e-12;
const ETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaScaled {
    pub source: GsnParams,
    pub eta0: f64,
    pub eta12: f64,
    pub scaled: GsnParams,
}

fn check_eta(what: &'static str, eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value: eta })
    }
}

pub fn scale(g: &GsnParams, eta0: f64, eta12: f64) -> Result<EtaScaled> {
    check_eta("efficiency eta0", eta0)?;
    check_eta("efficiency eta12", eta12)?;
    let scaled = GsnParams::from_determinant(
        eta0 * g.b0(),
        eta12 * g.b12(),
        eta0 * eta12 * g.k012(),
        g.modes(),
    )?;
    Ok(EtaScaled {
        source: *g,
        eta0,
        eta12,
        scaled,
    })
}

/// Asymptotic conditional Fano factor after detection.
pub fn fano_infinity(g: &GsnParams, eta0: f64, eta12: f64) -> Result<f64> {
    Ok(fano_limit(&scale(g, eta0, eta12)?.scaled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoCurve {
    pub n0: u64,
    pub eta: Vec<f64>,
    pub fano: Vec<f64>,
}

/// Conditional Fano factor at `n0` for a common efficiency `η0 = η12 = η`.
pub fn fano_vs_eta(g: &GsnParams, n0: u64, eta_grid: &[f64]) -> Result<FanoCurve> {
    let fano = eta_grid
        .par_iter()
        .map(|&eta| fano_closed(&scale(g, eta, eta)?.scaled, n0))
        .collect::<Result<Vec<_>>>()?;
    Ok(FanoCurve {
        n0,
        eta: eta_grid.to_vec(),
        fano,
    })
}

/// Efficiency `η = η0 = η12` at which the conditional Fano factor at `n0`
/// crosses one, by bisection on `(0, 1]`.
pub fn eta_crit(g: &GsnParams, n0: u64) -> Result<f64> {
    let excess =
        |eta: f64| -> Result<f64> { Ok(fano_closed(&scale(g, eta, eta)?.scaled, n0)? - 1.0) };
    bisect(
        excess,
        ETA_FLOOR,
        1.0,
        &format!("conditional Fano factor at n0 = {n0}"),
    )
}

/// Closed-form minimum single-field efficiency for `F∞ < 1`.
pub fn eta0_crit_min(g: &GsnParams) -> Result<f64> {
    let k = g.k012();
    if !(k < 0.0) {
        return Err(Error::NoRoot(format!(
            "K012 = {k} >= 0: no nonclassical conditional state to preserve"
        )));
    }
    Ok(-(g.b0() * g.b12() + k) / (2.0 * k * g.b0()))
}

/// The same threshold found by bisection on `F∞(η0, η12) − 1` at fixed `η12`.
pub fn eta0_crit_bisect(g: &GsnParams, eta12: f64) -> Result<f64> {
    check_eta("efficiency eta12", eta12)?;
    bisect(
        |eta0| Ok(fano_infinity(g, eta0, eta12)? - 1.0),
        ETA_FLOOR,
        1.0,
        "asymptotic conditional Fano factor",
    )
}

fn bisect<F>(f: F, mut lo: f64, mut hi: f64, what: &str) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo.signum() == fhi.signum() {
        return Err(Error::NoRoot(format!(
            "{what} minus one keeps sign {} on [{lo}, {hi}]",
            fhi.signum()
        )));
    }
    while hi - lo > BISECT_WIDTH {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `F∞` over an efficiency grid; `None` marks cells above
/// [`CONTOUR_CEILING`] or with a vanishing denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoContour {
    pub eta0: Vec<f64>,
    pub eta12: Vec<f64>,
    /// Row-major over `eta0`, then `eta12`.
    pub values: Vec<Option<f64>>,
}

impl FanoContour {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.eta12.len() + j]
    }
}

pub fn fano_contour(g: &GsnParams, eta0_grid: &[f64], eta12_grid: &[f64]) -> Result<FanoContour> {
    for &e in eta0_grid {
        check_eta("efficiency eta0", e)?;
    }
    for &e in eta12_grid {
        check_eta("efficiency eta12", e)?;
    }
    let n12 = eta12_grid.len();
    let values = (0..eta0_grid.len() * n12)
        .into_par_iter()
        .map(|idx| {
            let s = scale(g, eta0_grid[idx / n12], eta12_grid[idx % n12])?.scaled;
            if s.b0() <= 1e-9 || 1.0 + s.b0() <= 1e-9 {
                return Ok(None);
            }
            let f = fano_limit(&s);
            Ok((f.is_finite() && f <= CONTOUR_CEILING).then_some(f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FanoContour {
        eta0: eta0_grid.to_vec(),
        eta12: eta12_grid.to_vec(),
        values,
    })
}
