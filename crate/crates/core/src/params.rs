//! Two-field state parameters shared by every analysis stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding that a fictitious-noise component
/// or the determinant is zero.
pub(crate) const ZERO_REL_TOL: f64 = 1e-12;

/// Gaussian single/compound-field parameters: mean noise photon numbers per
/// mode `b0`, `b12`, the modulus of the cross correlation `d012`, the number
/// of modes `modes`, and the determinant `k012 = b0·b12 − d012²`.
///
/// `k012 < 0` marks a state with no classical joint intensity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsnParams {
    b0: f64,
    b12: f64,
    d012: f64,
    modes: f64,
    k012: f64,
}

impl GsnParams {
    pub fn new(b0: f64, b12: f64, d012: f64, modes: f64) -> Result<Self> {
        let k012 = b0 * b12 - d012 * d012;
        Self::validated(b0, b12, d012, modes, k012)
    }

    /// Builds from the determinant rather than the correlation; keeps `k012`
    /// exact, which matters for degenerate limits such as `k012 = −b0`.
    pub fn from_determinant(b0: f64, b12: f64, k012: f64, modes: f64) -> Result<Self> {
        let d2 = b0 * b12 - k012;
        if d2 < -ZERO_REL_TOL * (b0 * b12).abs().max(1.0) {
            return Err(Error::InvalidParams(format!(
                "determinant {k012} exceeds b0·b12 = {}",
                b0 * b12
            )));
        }
        Self::validated(b0, b12, d2.max(0.0).sqrt(), modes, k012)
    }

    fn validated(b0: f64, b12: f64, d012: f64, modes: f64, k012: f64) -> Result<Self> {
        for (name, v) in [("b0", b0), ("b12", b12), ("d012", d012)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if !(modes > 0.0) || !modes.is_finite() {
            return Err(Error::InvalidParams(format!("modes = {modes} must be > 0")));
        }
        let p = GsnParams {
            b0,
            b12,
            d012,
            modes,
            k012,
        };
        let tol = 1e-12 * (1.0 + b0.max(b12)).powi(2);
        if p.noise0() < -tol || p.noise12() < -tol {
            return Err(Error::InvalidParams(format!(
                "fictitious noise components b0+K = {}, b12+K = {} must be >= 0",
                p.noise0(),
                p.noise12()
            )));
        }
        Ok(p)
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }
    pub fn b12(&self) -> f64 {
        self.b12
    }
    pub fn d012(&self) -> f64 {
        self.d012
    }
    pub fn modes(&self) -> f64 {
        self.modes
    }
    pub fn k012(&self) -> f64 {
        self.k012
    }

    /// `b0 + k012`, the single-field fictitious noise.
    pub fn noise0(&self) -> f64 {
        self.b0 + self.k012
    }

    /// `b12 + k012`, the compound-field fictitious noise.
    pub fn noise12(&self) -> f64 {
        self.b12 + self.k012
    }

    pub fn is_nonclassical(&self) -> bool {
        self.k012 < 0.0
    }

    /// Swaps the single and compound fields.
    pub fn swapped(&self) -> Self {
        GsnParams {
            b0: self.b12,
            b12: self.b0,
            ..*self
        }
    }

    pub fn with_modes(&self, modes: f64) -> Result<Self> {
        Self::validated(self.b0, self.b12, self.d012, modes, self.k012)
    }

    /// Recomputes the determinant and checks it against the stored value.
    pub fn determinant_consistent(&self) -> bool {
        let k = self.b0 * self.b12 - self.d012 * self.d012;
        (k - self.k012).abs() <= 1e-12 * (self.b0 * self.b12).max(self.d012 * self.d012).max(1.0)
    }
}
