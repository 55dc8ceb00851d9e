//! Monte-Carlo photocount records for classical (`K012 ≥ 0`) states.
//!
//! For an integer number of modes each mode carries a complex Gaussian pair
//! with `⟨|α0|²⟩ = B0`, `⟨|α12|²⟩ = B12` and anomalous correlation
//! `⟨α0 α12⟩ = D`, realized as `α12 = (D/B0)·α0* + ξ` with an independent
//! residual `ξ` of variance `K/B0`. For a fractional mode number the
//! intensities are drawn from the equivalent gamma mixture
//!
//! ```text
//! k ~ NB(M, ρ),  W0 ~ Γ(M+k, K/B12),  W12 ~ Γ(M+k, K/B0),  ρ = D²/(B0·B12)
//! ```
//!
//! which has the same joint law for any real `M > 0`. Photocounts are
//! Poisson in `η·W`, either drawn directly or by Bernoulli thinning of
//! `Poisson(W)`.
//!
//! Pulses are generated in fixed chunks; chunk `c` uses the ChaCha stream
//! `c` of the seeded generator, so the output does not depend on how chunks
//! are scheduled across threads.

use nalgebra::{Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::EfficiencyVector;
use crate::params::GsnParams;

/// Pulses per independently seeded chunk.
pub const CHUNK: u64 = 1024;

/// Stream offset separating noise draws from signal draws.
const NOISE_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Detection {
    /// `m ~ Poisson(η·W)`.
    #[default]
    Direct,
    /// `n ~ Poisson(W)`, then `m ~ Binomial(n, η)`.
    Thinned,
}

/// Additive integer noise with the given mean and variance per arm.
///
/// `var == mean` gives Poisson noise, `var > mean` negative-binomial noise and
/// `var < mean` binomial noise whose trial count is `mean²/(mean − var)`
/// rounded to an integer (the variance is matched up to that rounding).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mean0: f64,
    pub var0: f64,
    pub mean12: f64,
    pub var12: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: GsnParams,
    pub eta: EfficiencyVector,
    pub n_pulses: u64,
    pub seed: u64,
    pub detection: Detection,
    pub noise: Option<NoiseSpec>,
}

/// Rejects parameters whose real quadrature covariance
/// `(x0, y0, x12, y12)` is not positive semidefinite, i.e. `K012 < 0`.
pub fn check_covariance(g: &GsnParams) -> Result<()> {
    let (b0, b12, d) = (g.b0(), g.b12(), g.d012());
    #[rustfmt::skip]
    let cov = Matrix4::new(
        b0,  0.0, d,   0.0,
        0.0, b0,  0.0, -d,
        d,   0.0, b12, 0.0,
        0.0, -d,  0.0, b12,
    ) * 0.5;
    let min = SymmetricEigen::new(cov).eigenvalues.min();
    let tol = 1e-12 * (1.0 + b0.max(b12));
    if min < -tol || g.k012() < 0.0 {
        return Err(Error::NonclassicalParams(g.k012()));
    }
    Ok(())
}

/// Draws `n_pulses` photocount pairs `(m0, m12)`, noise included when
/// configured.
pub fn sample_pulses(cfg: &SimConfig) -> Result<Vec<(u64, u64)>> {
    check_covariance(&cfg.params)?;
    let eta12 = cfg.eta.eta12()?;
    let source = IntensitySource::new(&cfg.params);
    let chunks = cfg.n_pulses.div_ceil(CHUNK);
    let pulses: Vec<(u64, u64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let len = CHUNK.min(cfg.n_pulses - c * CHUNK);
            (0..len)
                .map(|_| {
                    let (w0, w12) = source.draw(&mut rng);
                    (
                        detect(&mut rng, w0, cfg.eta.eta0, cfg.detection),
                        detect(&mut rng, w12, eta12, cfg.detection),
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect();
    match &cfg.noise {
        Some(n) => inject_noise(&pulses, n, cfg.seed),
        None => Ok(pulses),
    }
}

/// Adds independent noise counts to each arm; reproducible for a fixed seed.
pub fn inject_noise(
    pulses: &[(u64, u64)],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<(u64, u64)>> {
    let arm0 = NoiseLaw::new(noise.mean0, noise.var0)?;
    let arm12 = NoiseLaw::new(noise.mean12, noise.var12)?;
    Ok(pulses
        .par_chunks(CHUNK as usize)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let mut rng = chunk_rng(seed, NOISE_STREAM + c as u64);
            chunk
                .iter()
                .map(|&(m0, m12)| (m0 + arm0.draw(&mut rng), m12 + arm12.draw(&mut rng)))
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Standard errors of statistics computed on `batches` equal contiguous
/// batches of `pulses` (batch-means method).
pub fn batch_standard_errors<F>(pulses: &[(u64, u64)], batches: usize, stat: F) -> Result<Vec<f64>>
where
    F: Fn(&[(u64, u64)]) -> Result<Vec<f64>> + Sync,
{
    if batches < 2 || pulses.len() < batches {
        return Err(Error::EmptyInput(
            "batch means need at least two non-empty batches",
        ));
    }
    let size = pulses.len() / batches;
    let per_batch = (0..batches)
        .into_par_iter()
        .map(|b| stat(&pulses[b * size..(b + 1) * size]))
        .collect::<Result<Vec<_>>>()?;
    let dim = per_batch[0].len();
    let nb = batches as f64;
    Ok((0..dim)
        .map(|d| {
            let mean = per_batch.iter().map(|v| v[d]).sum::<f64>() / nb;
            let var = per_batch.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            (var / nb).sqrt()
        })
        .collect())
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("finite positive Poisson mean")
        .sample(rng) as u64
}

fn detect<R: Rng>(rng: &mut R, w: f64, eta: f64, mode: Detection) -> u64 {
    match mode {
        Detection::Direct => poisson(rng, eta * w),
        Detection::Thinned => {
            let n = poisson(rng, w);
            if n == 0 || eta >= 1.0 {
                n
            } else {
                Binomial::new(n, eta)
                    .expect("efficiency in (0, 1)")
                    .sample(rng)
            }
        }
    }
}

enum IntensitySource {
    /// Integer mode count, Gaussian amplitudes.
    Modes {
        modes: u64,
        s0: f64,
        coupling: f64,
        s_resid: f64,
    },
    /// Any real mode count, gamma mixture.
    Mixture {
        modes: f64,
        mix_scale: f64,
        scale0: f64,
        scale12: f64,
    },
    /// `K012 = 0`: fully correlated intensities.
    Locked {
        shape: Gamma<f64>,
        ratio: f64,
        b0: f64,
    },
}

impl IntensitySource {
    fn new(g: &GsnParams) -> Self {
        let (b0, b12, d, k, m) = (g.b0(), g.b12(), g.d012(), g.k012().max(0.0), g.modes());
        if m.fract() == 0.0 {
            let (coupling, resid) = if b0 > 0.0 {
                (d / b0, k / b0)
            } else {
                (0.0, b12)
            };
            return IntensitySource::Modes {
                modes: m as u64,
                s0: (0.5 * b0).sqrt(),
                coupling,
                s_resid: (0.5 * resid).sqrt(),
            };
        }
        if k == 0.0 && b0 > 0.0 && b12 > 0.0 {
            return IntensitySource::Locked {
                shape: Gamma::new(m, 1.0).expect("positive mode count"),
                ratio: b12 / b0,
                b0,
            };
        }
        let rho = if b0 > 0.0 && b12 > 0.0 {
            d * d / (b0 * b12)
        } else {
            0.0
        };
        let (scale0, scale12) = if rho > 0.0 {
            (k / b12, k / b0)
        } else {
            (b0, b12)
        };
        IntensitySource::Mixture {
            modes: m,
            mix_scale: rho / (1.0 - rho),
            scale0,
            scale12,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            IntensitySource::Modes {
                modes,
                s0,
                coupling,
                s_resid,
            } => {
                let (mut w0, mut w12) = (0.0, 0.0);
                for _ in 0..modes {
                    let (x0, y0) = (s0 * normal(rng), s0 * normal(rng));
                    // α12 = c·α0* + ξ
                    let x12 = coupling * x0 + s_resid * normal(rng);
                    let y12 = -coupling * y0 + s_resid * normal(rng);
                    w0 += x0 * x0 + y0 * y0;
                    w12 += x12 * x12 + y12 * y12;
                }
                (w0, w12)
            }
            IntensitySource::Mixture {
                modes,
                mix_scale,
                scale0,
                scale12,
            } => {
                let k = if mix_scale > 0.0 {
                    let lambda = Gamma::new(modes, mix_scale)
                        .expect("positive shape")
                        .sample(rng);
                    poisson(rng, lambda)
                } else {
                    0
                };
                let shape = modes + k as f64;
                let w0 = gamma(rng, shape, scale0);
                let w12 = gamma(rng, shape, scale12);
                (w0, w12)
            }
            IntensitySource::Locked { shape, ratio, b0 } => {
                let w0 = b0 * shape.sample(rng);
                (w0, ratio * w0)
            }
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale)
        .expect("positive gamma parameters")
        .sample(rng)
}

enum NoiseLaw {
    None,
    Poisson(f64),
    /// Gamma–Poisson mixture with the given gamma shape and scale.
    NegBinomial(Gamma<f64>),
    Binomial(Binomial),
}

impl NoiseLaw {
    fn new(mean: f64, var: f64) -> Result<Self> {
        for (what, v) in [("noise mean", mean), ("noise variance", var)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        if mean == 0.0 {
            return Ok(NoiseLaw::None);
        }
        let excess = var - mean;
        if excess.abs() <= 1e-12 * mean {
            Ok(NoiseLaw::Poisson(mean))
        } else if excess > 0.0 {
            let shape = mean * mean / excess;
            Ok(NoiseLaw::NegBinomial(
                Gamma::new(shape, mean / shape).expect("positive gamma parameters"),
            ))
        } else {
            let trials = (mean * mean / (mean - var))
                .round()
                .max(mean.ceil())
                .max(1.0);
            let p = (mean / trials).min(1.0);
            Binomial::new(trials as u64, p)
                .map(NoiseLaw::Binomial)
                .map_err(|_| Error::Domain {
                    what: "binomial noise probability",
                    value: p,
                })
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            NoiseLaw::None => 0,
            NoiseLaw::Poisson(m) => poisson(rng, *m),
            NoiseLaw::NegBinomial(g) => {
                let lambda = g.sample(rng);
                poisson(rng, lambda)
            }
            NoiseLaw::Binomial(b) => b.sample(rng),
        }
    }
}
