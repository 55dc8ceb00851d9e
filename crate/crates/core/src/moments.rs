//! From per-pulse detector counts to state parameters.
//!
//! The chain is: sample moments of the counts, optional subtraction of an
//! independently measured additive noise, correction for detection
//! efficiency (photocounts to photons), removal of shot noise (photons to
//! integrated intensities), and finally the parameter estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::GsnParams;

/// Relative spread |M0 − M12| / M above which the estimate is reported as
/// suspect (misaligned detectors).
pub const MODE_SPREAD_WARN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    Photocount,
    Photon,
}

/// First and second raw moments of the single (0) and compound (12) arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotocountMoments {
    pub mean0: f64,
    pub mean12: f64,
    pub sq0: f64,
    pub sq12: f64,
    pub cross: f64,
    pub n_pulses: u64,
    pub kind: MomentKind,
}

impl PhotocountMoments {
    pub fn new(
        mean0: f64,
        mean12: f64,
        sq0: f64,
        sq12: f64,
        cross: f64,
        n_pulses: u64,
        kind: MomentKind,
    ) -> Result<Self> {
        let m = PhotocountMoments {
            mean0,
            mean12,
            sq0,
            sq12,
            cross,
            n_pulses,
            kind,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.mean0, self.mean12, self.sq0, self.sq12, self.cross];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMoments("non-finite moment".into()));
        }
        if self.mean0 < 0.0 || self.mean12 < 0.0 {
            return Err(Error::InvalidMoments(format!(
                "negative mean ({}, {})",
                self.mean0, self.mean12
            )));
        }
        let (v0, v12, c) = (self.var0(), self.var12(), self.cov());
        let tol0 = 1e-12 * self.sq0.abs().max(1.0);
        let tol12 = 1e-12 * self.sq12.abs().max(1.0);
        if v0 < -tol0 || v12 < -tol12 {
            return Err(Error::InvalidMoments(format!(
                "second moment below squared mean (variances {v0}, {v12})"
            )));
        }
        let bound = (v0.max(0.0) * v12.max(0.0)).sqrt();
        if c.abs() > bound * (1.0 + 1e-12) + tol0.max(tol12) {
            return Err(Error::InvalidMoments(format!(
                "cross covariance {c} violates Cauchy-Schwarz bound {bound}"
            )));
        }
        Ok(())
    }

    pub fn var0(&self) -> f64 {
        self.sq0 - self.mean0 * self.mean0
    }

    pub fn var12(&self) -> f64 {
        self.sq12 - self.mean12 * self.mean12
    }

    pub fn cov(&self) -> f64 {
        self.cross - self.mean0 * self.mean12
    }

    fn from_central(
        mean0: f64,
        mean12: f64,
        var0: f64,
        var12: f64,
        cov: f64,
        n_pulses: u64,
        kind: MomentKind,
    ) -> Result<Self> {
        Self::new(
            mean0,
            mean12,
            var0 + mean0 * mean0,
            var12 + mean12 * mean12,
            cov + mean0 * mean12,
            n_pulses,
            kind,
        )
    }
}

/// One-pass, mergeable accumulator of count moments (Welford updates with
/// Chan's pairwise merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean0: f64,
    mean12: f64,
    m2_0: f64,
    m2_12: f64,
    c: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, m0: u64, m12: u64) {
        let (x, y) = (m0 as f64, m12 as f64);
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean0;
        let dy = y - self.mean12;
        self.mean0 += dx / n;
        self.mean12 += dy / n;
        self.m2_0 += dx * (x - self.mean0);
        self.m2_12 += dy * (y - self.mean12);
        self.c += dx * (y - self.mean12);
    }

    pub fn merge(&self, other: &MomentAccumulator) -> MomentAccumulator {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = other.mean0 - self.mean0;
        let dy = other.mean12 - self.mean12;
        MomentAccumulator {
            n: self.n + other.n,
            mean0: self.mean0 + dx * nb / n,
            mean12: self.mean12 + dy * nb / n,
            m2_0: self.m2_0 + other.m2_0 + dx * dx * na * nb / n,
            m2_12: self.m2_12 + other.m2_12 + dy * dy * na * nb / n,
            c: self.c + other.c + dx * dy * na * nb / n,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Population (1/n) moments of everything pushed so far.
    pub fn finish(&self, kind: MomentKind) -> Result<PhotocountMoments> {
        if self.n == 0 {
            return Err(Error::EmptyInput("pulse records"));
        }
        let n = self.n as f64;
        PhotocountMoments::from_central(
            self.mean0,
            self.mean12,
            self.m2_0 / n,
            self.m2_12 / n,
            self.c / n,
            self.n,
            kind,
        )
    }
}

/// Sample moments of a stream of `(m0, m12)` pairs.
pub fn accumulate<I>(samples: I) -> Result<PhotocountMoments>
where
    I: IntoIterator<Item = (u64, u64)>,
{
    let mut acc = MomentAccumulator::default();
    for (a, b) in samples {
        acc.push(a, b);
    }
    acc.finish(MomentKind::Photocount)
}

/// Parallel [`accumulate`] over an in-memory record set.
pub fn accumulate_par(samples: &[(u64, u64)]) -> Result<PhotocountMoments> {
    samples
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = MomentAccumulator::default();
            for &(a, b) in chunk {
                acc.push(a, b);
            }
            acc
        })
        .reduce(MomentAccumulator::default, |a, b| a.merge(&b))
        .finish(MomentKind::Photocount)
}

/// Removes independent additive noise measured separately with the same
/// detectors.
pub fn subtract_noise(
    meas: &PhotocountMoments,
    dark: &PhotocountMoments,
) -> Result<PhotocountMoments> {
    if meas.kind != MomentKind::Photocount || dark.kind != MomentKind::Photocount {
        return Err(Error::KindMismatch(
            "noise subtraction needs photocount moments",
        ));
    }
    let mean0 = meas.mean0 - dark.mean0;
    let mean12 = meas.mean12 - dark.mean12;
    let var0 = meas.var0() - dark.var0();
    let var12 = meas.var12() - dark.var12();
    if mean0 < 0.0 || mean12 < 0.0 || var0 < 0.0 || var12 < 0.0 {
        return Err(Error::InvalidMoments(format!(
            "noise over-subtraction: corrected means ({mean0}, {mean12}), variances ({var0}, {var12})"
        )));
    }
    PhotocountMoments::from_central(
        mean0,
        mean12,
        var0,
        var12,
        meas.cov() - dark.cov(),
        meas.n_pulses,
        MomentKind::Photocount,
    )
}

/// Detection efficiencies of the single arm and the two compound-field arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyVector {
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl EfficiencyVector {
    pub fn new(eta0: f64, eta1: f64, eta2: f64) -> Result<Self> {
        for (what, v) in [
            ("efficiency eta0", eta0),
            ("efficiency eta1", eta1),
            ("efficiency eta2", eta2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(EfficiencyVector { eta0, eta1, eta2 })
    }

    pub fn uniform(eta: f64) -> Result<Self> {
        Self::new(eta, eta, eta)
    }

    /// Efficiency of the compound arm; defined only when both of its
    /// detectors match.
    pub fn eta12(&self) -> Result<f64> {
        if self.eta1 != self.eta2 {
            return Err(Error::InvalidParams(format!(
                "compound-field efficiencies differ (eta1 = {}, eta2 = {})",
                self.eta1, self.eta2
            )));
        }
        Ok(self.eta1)
    }
}

/// Photocount moments to photon-number moments.
pub fn to_photon_moments(
    m: &PhotocountMoments,
    eta: &EfficiencyVector,
) -> Result<PhotocountMoments> {
    if m.kind != MomentKind::Photocount {
        return Err(Error::KindMismatch(
            "efficiency correction needs photocount moments",
        ));
    }
    let e0 = eta.eta0;
    let e12 = eta.eta12()?;
    PhotocountMoments::new(
        m.mean0 / e0,
        m.mean12 / e12,
        (m.sq0 - (1.0 - e0) * m.mean0) / (e0 * e0),
        (m.sq12 - (1.0 - e12) * m.mean12) / (e12 * e12),
        m.cross / (e0 * e12),
        m.n_pulses,
        MomentKind::Photon,
    )
}

/// Central moments of the integrated intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityMoments {
    pub mean0: f64,
    pub mean12: f64,
    pub var0: f64,
    pub var12: f64,
    pub cov: f64,
    pub kind: MomentKind,
}

/// Removes the Poisson shot-noise contribution: ⟨W²⟩ = ⟨n²⟩ − ⟨n⟩.
pub fn to_intensity_moments(m: &PhotocountMoments) -> IntensityMoments {
    IntensityMoments {
        mean0: m.mean0,
        mean12: m.mean12,
        var0: m.var0() - m.mean0,
        var12: m.var12() - m.mean12,
        cov: m.cov(),
        kind: m.kind,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsnEstimate {
    pub params: GsnParams,
    pub m0: f64,
    pub m12: f64,
    /// |M0 − M12| / M.
    pub mode_spread: f64,
    pub kind: MomentKind,
}

impl GsnEstimate {
    pub fn spread_suspect(&self) -> bool {
        self.mode_spread > MODE_SPREAD_WARN
    }
}

/// Fits {B0, B12, |D012|, M} to intensity moments. M is the average of the
/// per-arm mode numbers.
pub fn estimate_gsn(w: &IntensityMoments) -> Result<GsnEstimate> {
    if !(w.var0 > 0.0) || !(w.var12 > 0.0) {
        return Err(Error::InvalidMoments(format!(
            "intensity variances must be positive (got {}, {})",
            w.var0, w.var12
        )));
    }
    if !(w.mean0 > 0.0) || !(w.mean12 > 0.0) {
        return Err(Error::InvalidMoments(format!(
            "means must be positive (got {}, {})",
            w.mean0, w.mean12
        )));
    }
    if w.cov < 0.0 {
        return Err(Error::InvalidMoments(format!(
            "negative intensity cross covariance {}",
            w.cov
        )));
    }
    let b0 = w.var0 / w.mean0;
    let b12 = w.var12 / w.mean12;
    let m0 = w.mean0 * w.mean0 / w.var0;
    let m12 = w.mean12 * w.mean12 / w.var12;
    let modes = 0.5 * (m0 + m12);
    let d = (w.cov / modes).sqrt();
    let mode_spread = (m0 - m12).abs() / modes;
    if mode_spread > MODE_SPREAD_WARN {
        log::warn!(
            "mode numbers M0 = {m0:.4} and M12 = {m12:.4} differ by {:.1}%",
            100.0 * mode_spread
        );
    }
    Ok(GsnEstimate {
        params: GsnParams::new(b0, b12, d, modes)?,
        m0,
        m12,
        mode_spread,
        kind: w.kind,
    })
}

/// Scalar nonclassicality indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticScalars {
    pub k012: f64,
    /// Noise reduction factor var(n0 − n12) / (⟨n0⟩ + ⟨n12⟩).
    pub r: f64,
    /// Principal squeezing parameter.
    pub lambda: f64,
    /// Normalized count covariance.
    pub cov_c: f64,
    /// ⟨[Δ(W0 − W12)]²⟩.
    pub wave_var_diff: f64,
    /// ⟨[Δ(n0 − n12)]²⟩.
    pub diff_var: f64,
}

/// Indicators implied by the fitted parameters `g` at the measured means.
///
/// Second moments are taken from the model (`M B²`, `M D²` plus shot noise)
/// rather than from the raw sample, so all indicators share the single
/// averaged mode number.
pub fn diagnostics(m: &PhotocountMoments, g: &GsnParams) -> DiagnosticScalars {
    let modes = g.modes();
    let (b0, b12, d) = (g.b0(), g.b12(), g.d012());
    let total = m.mean0 + m.mean12;
    let wave = modes * (b0 * b0 + b12 * b12 - 2.0 * d * d);
    let diff_var = total + wave;
    // re-derive the wave term from diff_var so the shot-noise identity
    // holds exactly in floating point
    let wave_var_diff = (diff_var - m.mean0) - m.mean12;
    let var0 = modes * b0 * b0 + m.mean0;
    let var12 = modes * b12 * b12 + m.mean12;
    let cov_c = if var0 > 0.0 && var12 > 0.0 {
        modes * d * d / (var0 * var12).sqrt()
    } else {
        0.0
    };
    DiagnosticScalars {
        k012: g.k012(),
        r: if total > 0.0 { diff_var / total } else { 1.0 },
        lambda: 1.0 + b0 + b12 - 2.0 * d,
        cov_c,
        wave_var_diff,
        diff_var,
    }
}

/// Photon-number moments implied by `g` (intensity moments plus Poisson
/// shot noise).
pub fn model_moments(g: &GsnParams, n_pulses: u64, kind: MomentKind) -> PhotocountMoments {
    let m = g.modes();
    let mean0 = m * g.b0();
    let mean12 = m * g.b12();
    let var0 = m * g.b0() * g.b0() + mean0;
    let var12 = m * g.b12() * g.b12() + mean12;
    let cov = m * g.d012() * g.d012();
    PhotocountMoments {
        mean0,
        mean12,
        sq0: var0 + mean0 * mean0,
        sq12: var12 + mean12 * mean12,
        cross: cov + mean0 * mean12,
        n_pulses,
        kind,
    }
}
