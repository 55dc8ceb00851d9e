//! Run configuration: a TOML document with a strict schema.
//!
//! Relative input paths are resolved against the directory holding the
//! configuration file; the output directory is taken as given.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use trimode::moments::MomentKind;
use trimode::sampler::{Detection, NoiseSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub input: Option<InputSection>,
    pub params: Option<ParamsSection>,
    #[serde(default)]
    pub efficiency: EfficiencySection,
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub output: OutputSection,
    pub simulate: Option<SimulateSection>,
    pub predict: Option<PredictSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Worker thread cap; all cores when absent.
    pub threads: Option<usize>,
}

/// Measured data: a pulse-record CSV or literal raw moments.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub pulses: Option<PathBuf>,
    pub moments: Option<MomentsLiteral>,
    #[serde(default = "default_kind")]
    pub kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsLiteral {
    pub mean0: f64,
    pub mean12: f64,
    pub sq0: f64,
    pub sq12: f64,
    pub cross: f64,
    #[serde(default = "one")]
    pub n_pulses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Photocount,
    Photon,
}

impl From<Kind> for MomentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Photocount => MomentKind::Photocount,
            Kind::Photon => MomentKind::Photon,
        }
    }
}

/// Explicit state parameters; exactly one of `d012`, `k012`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub b0: f64,
    pub b12: f64,
    pub d012: Option<f64>,
    pub k012: Option<f64>,
    pub modes: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySection {
    #[serde(default = "unit")]
    pub eta0: f64,
    #[serde(default = "unit")]
    pub eta1: f64,
    #[serde(default = "unit")]
    pub eta2: f64,
}

impl Default for EfficiencySection {
    fn default() -> Self {
        EfficiencySection {
            eta0: 1.0,
            eta1: 1.0,
            eta2: 1.0,
        }
    }
}

/// Separately measured detector noise, subtracted from the input moments.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub pulses: Option<PathBuf>,
    pub moments: Option<MomentsLiteral>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Level whose parameters feed the distribution commands when they are
    /// estimated from `[input]`.
    #[serde(default = "default_level")]
    pub level: Kind,
    #[serde(default = "one")]
    pub n0_min: u64,
    #[serde(default = "default_n0_max")]
    pub n0_max: u64,
    #[serde(default = "default_orders")]
    pub s: Vec<f64>,
    #[serde(default = "default_sweep_n0")]
    pub sweep_n0: Vec<u64>,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    #[serde(default = "default_eta_points")]
    pub eta_points: usize,
    #[serde(default = "default_crit_n0")]
    pub crit_n0: Vec<u64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        toml::from_str("").expect("analysis defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_tail")]
    pub target_tail: f64,
    #[serde(default = "default_budget")]
    pub cell_budget: u64,
    #[serde(default = "default_cancellation")]
    pub cancellation_nats: f64,
    /// Explicit joint-grid rectangle; both or neither.
    pub n0_max: Option<u64>,
    pub n12_max: Option<u64>,
    #[serde(default = "default_quasi_points")]
    pub quasi_points: usize,
    /// Explicit quasi-grid extents; auto-ranged when absent.
    pub w0_max: Option<f64>,
    pub w12_max: Option<f64>,
    #[serde(default = "default_contour_points")]
    pub contour_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        toml::from_str("").expect("grid defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_pulses: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub detection: Detection,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub gamma0: f64,
    pub gamma1: f64,
    #[serde(default)]
    pub gamma0_im: f64,
    #[serde(default)]
    pub gamma1_im: f64,
    pub t_max: f64,
    #[serde(default = "default_predict_points")]
    pub points: usize,
    #[serde(default = "unit")]
    pub modes: f64,
}

fn one() -> u64 {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_kind() -> Kind {
    Kind::Photocount
}
fn default_level() -> Kind {
    Kind::Photon
}
fn default_n0_max() -> u64 {
    20
}
fn default_orders() -> Vec<f64> {
    vec![0.4, 0.9]
}
fn default_sweep_n0() -> Vec<u64> {
    vec![10, 100, 1000, 3000]
}
fn default_eta_min() -> f64 {
    0.05
}
fn default_eta_points() -> usize {
    96
}
fn default_crit_n0() -> Vec<u64> {
    vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
}
fn default_tail() -> f64 {
    1e-10
}
fn default_budget() -> u64 {
    40_000_000
}
fn default_cancellation() -> f64 {
    30.0
}
fn default_quasi_points() -> usize {
    101
}
fn default_contour_points() -> usize {
    101
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_predict_points() -> usize {
    101
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        if let Some(i) = &mut self.input {
            fix(&mut i.pulses);
        }
        if let Some(n) = &mut self.noise {
            fix(&mut n.pulses);
        }
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if let Some(i) = &self.input {
            if i.pulses.is_some() == i.moments.is_some() {
                return bad("[input] needs exactly one of `pulses` or `moments`");
            }
        }
        if let Some(n) = &self.noise {
            if n.pulses.is_some() == n.moments.is_some() {
                return bad("[noise] needs exactly one of `pulses` or `moments`");
            }
        }
        if let Some(p) = &self.params {
            if p.d012.is_some() == p.k012.is_some() {
                return bad("[params] needs exactly one of `d012` or `k012`");
            }
        }
        if self.run.threads == Some(0) {
            return bad("[run] threads must be at least 1");
        }
        if self.analysis.n0_min == 0 || self.analysis.n0_min > self.analysis.n0_max {
            return bad("[analysis] needs 1 <= n0_min <= n0_max");
        }
        if self.analysis.eta_points < 2 {
            return bad("[analysis] eta_points must be at least 2");
        }
        if self.grids.n0_max.is_some() != self.grids.n12_max.is_some() {
            return bad("[grids] n0_max and n12_max go together");
        }
        if self.grids.w0_max.is_some() != self.grids.w12_max.is_some() {
            return bad("[grids] w0_max and w12_max go together");
        }
        if self.grids.quasi_points < 2 || self.grids.contour_points < 2 {
            return bad("[grids] quasi_points and contour_points must be at least 2");
        }
        if let Some(p) = &self.predict {
            if p.points < 2 {
                return bad("[predict] points must be at least 2");
            }
        }
        Ok(())
    }
}
