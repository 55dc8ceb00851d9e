//! Joint single/compound-field photon-number distribution and the
//! quantities derived from it.
//!
//! A cell of the joint distribution is a finite sum over `r`
//!
//! ```text
//! p(n0, n12) = Σ_r Γ(N+M−r) / (Γ(M) r! (n0−r)! (n12−r)!)
//!              · f0^(n0−r) f12^(n12−r) (−K·den)^r / den^(N+M)
//! ```
//!
//! with `N = n0 + n12`, `f0 = B0 + K`, `f12 = B12 + K`, `den = 1 + B0 + B12 + K`
//! and `0⁰ = 1`. The terms are log-concave in `r`, so each cell is summed
//! outward from its largest term and pruned once terms fall 40 nats below
//! it. For `K > 0` the terms alternate in sign and the cancellation depth is
//! recorded per cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, ln_gamma, log_sum_exp, Neumaier, DEFAULT_CANCELLATION_NATS};
use crate::params::GsnParams;

/// Terms (and cells, when windowing rows) smaller than the running peak by
/// this many nats are dropped.
const PRUNE_NATS: f64 = 40.0;

/// Alternating r-sums that lose more than this many nats to cancellation are
/// replaced by the positive mixture series.
const RSUM_TRUST_NATS: f64 = 6.0;

/// |K| below `K_FAST_PATH_REL · B0 · B12` is treated as exactly zero.
const K_FAST_PATH_REL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOptions {
    /// Analytic marginal mass allowed outside the grid.
    pub target_tail: f64,
    /// Largest number of cells materialized as full rows; larger grids keep
    /// only the significant window of each row.
    pub cell_budget: u64,
    pub cancellation_nats: f64,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            target_tail: 1e-10,
            cell_budget: 40_000_000,
            cancellation_nats: DEFAULT_CANCELLATION_NATS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Single,
    Compound,
}

/// ln of the Mandel-Rice (negative-binomial) probability of `n` photons
/// from `modes` modes of mean `b` photons each.
pub fn log_mandel_rice(n: u64, b: f64, modes: f64) -> f64 {
    if b == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_gamma(n as f64 + modes) - ln_gamma(modes) - ln_factorial(n) + n as f64 * b.ln()
        - (n as f64 + modes) * b.ln_1p()
}

/// P(X > n) for the Mandel-Rice law.
pub fn mandel_rice_upper_tail(n: u64, b: f64, modes: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let q = b / (1.0 + b);
    let mut k = n + 1;
    let mut term = log_mandel_rice(k, b, modes).exp();
    let mut sum = Neumaier::default();
    loop {
        sum.add(term);
        let ratio = (k as f64 + modes) / (k as f64 + 1.0) * q;
        let next = term * ratio;
        if ratio < 1.0 && next <= 1e-17 * sum.total() {
            sum.add(next * ratio / (1.0 - ratio));
            break;
        }
        if term == 0.0 && ratio < 1.0 {
            break;
        }
        term = next;
        k += 1;
    }
    sum.total()
}

/// Smallest `mean + c·sd` (c = 3, 4, …) whose upper tail is below `target`.
fn truncation_bound(b: f64, modes: f64, target: f64) -> (u64, f64) {
    if b == 0.0 {
        return (0, 0.0);
    }
    let mean = modes * b;
    let sd = (modes * b * (1.0 + b)).sqrt();
    let mut c = 3.0;
    loop {
        let n = (mean + c * sd).ceil() as u64;
        let tail = mandel_rice_upper_tail(n, b, modes);
        if tail < target {
            return (n, tail);
        }
        c += 1.0;
    }
}

/// Per-cell evaluator with cached log-factorial and log-gamma tables.
#[derive(Debug, Clone)]
pub(crate) struct CellKernel {
    modes: f64,
    ln_gamma_m: f64,
    ln_f0: f64,
    ln_f12: f64,
    ln_kd: f64,
    ln_den: f64,
    abs_z: f64,
    alternating: bool,
    cancel_nats: f64,
    mixture: Option<Mixture>,
    ln_fact: Vec<f64>,
    /// ln Γ(k + M)
    ln_gamma_shift: Vec<f64>,
}

/// Coefficients of the mixture representation for `K > 0`: mixing weight
/// `ρ = D²/(B0 B12)`, per-shape means `θ0 = K/B12`, `θ12 = K/B0`.
#[derive(Debug, Clone)]
struct Mixture {
    rho_eff: f64,
    ln_rho: f64,
    ln_1m_rho: f64,
    ln_t0: f64,
    ln_t12: f64,
    ln_1p_t0: f64,
    ln_1p_t12: f64,
}

impl Mixture {
    fn new(b0: f64, b12: f64, k: f64) -> Self {
        let rho = 1.0 - k / (b0 * b12);
        let t0 = k / b12;
        let t12 = k / b0;
        Mixture {
            rho_eff: rho / ((1.0 + t0) * (1.0 + t12)),
            ln_rho: ln_or_neg_inf(rho),
            ln_1m_rho: (k / (b0 * b12)).ln(),
            ln_t0: t0.ln(),
            ln_t12: t12.ln(),
            ln_1p_t0: t0.ln_1p(),
            ln_1p_t12: t12.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellValue {
    pub log_prob: f64,
    pub cancellation: f64,
    pub flagged: bool,
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `k · ln x` with the convention 0 · ln 0 = 0.
#[inline]
fn mul_log(k: u64, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

impl CellKernel {
    pub(crate) fn new(g: &GsnParams, max_single: u64, max_sum: u64, cancel_nats: f64) -> Self {
        let mut k = g.k012();
        if k.abs() < K_FAST_PATH_REL * g.b0() * g.b12() {
            k = 0.0;
        }
        let f0 = (g.b0() + k).max(0.0);
        let f12 = (g.b12() + k).max(0.0);
        let den = 1.0 + g.b0() + g.b12() + k;
        let modes = g.modes();
        let abs_z = if f0 > 0.0 && f12 > 0.0 {
            k.abs() * den / (f0 * f12)
        } else {
            0.0
        };
        CellKernel {
            modes,
            ln_gamma_m: ln_gamma(modes),
            ln_f0: ln_or_neg_inf(f0),
            ln_f12: ln_or_neg_inf(f12),
            ln_kd: ln_or_neg_inf(k.abs() * den),
            ln_den: den.ln(),
            abs_z,
            alternating: k > 0.0,
            cancel_nats,
            mixture: (k > 0.0).then(|| Mixture::new(g.b0(), g.b12(), k)),
            ln_fact: (0..=max_single).map(ln_factorial).collect(),
            ln_gamma_shift: (0..=max_sum).map(|j| ln_gamma(j as f64 + modes)).collect(),
        }
    }

    #[inline]
    fn lf(&self, n: u64) -> f64 {
        self.ln_fact
            .get(n as usize)
            .copied()
            .unwrap_or_else(|| ln_factorial(n))
    }

    #[inline]
    fn lgs(&self, n: u64) -> f64 {
        self.ln_gamma_shift
            .get(n as usize)
            .copied()
            .unwrap_or_else(|| ln_gamma(n as f64 + self.modes))
    }

    fn log_term(&self, n0: u64, n12: u64, r: u64) -> f64 {
        let n = n0 + n12;
        self.lgs(n - r) - self.lf(r) - self.lf(n0 - r) - self.lf(n12 - r)
            + mul_log(n0 - r, self.ln_f0)
            + mul_log(n12 - r, self.ln_f12)
            + mul_log(r, self.ln_kd)
            - (n as f64 + self.modes) * self.ln_den
            - self.ln_gamma_m
    }

    /// The unique surviving `r` when a fictitious-noise component or `K`
    /// vanishes; `Some(None)` when no term survives.
    fn forced_r(&self, n0: u64, n12: u64) -> Option<Option<u64>> {
        let mut forced: Option<u64> = None;
        let mut conflict = false;
        let mut force = |r: u64| match forced {
            None => forced = Some(r),
            Some(prev) if prev != r => conflict = true,
            _ => {}
        };
        if self.ln_f0 == f64::NEG_INFINITY {
            force(n0);
        }
        if self.ln_f12 == f64::NEG_INFINITY {
            force(n12);
        }
        if self.ln_kd == f64::NEG_INFINITY {
            force(0);
        }
        match forced {
            None => None,
            Some(_) if conflict => Some(None),
            Some(r) if r > n0.min(n12) => Some(None),
            Some(r) => Some(Some(r)),
        }
    }

    pub(crate) fn cell(&self, n0: u64, n12: u64) -> CellValue {
        if let Some(forced) = self.forced_r(n0, n12) {
            let log_prob = forced.map_or(f64::NEG_INFINITY, |r| self.log_term(n0, n12, r));
            return CellValue {
                log_prob,
                cancellation: 0.0,
                flagged: false,
            };
        }
        let r_max = n0.min(n12);
        let big_l = (n0 + n12) as f64 + self.modes - 1.0;
        let z = self.abs_z;
        let (a0, a12) = (n0 as f64, n12 as f64);
        // largest term: smaller root of the unit-ratio quadratic
        let qa = z + 1.0;
        let qb = z * (a0 + a12) + big_l - 1.0;
        let qc = z * a0 * a12 - big_l;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let root = (qb - disc.sqrt()) / (2.0 * qa);
        let rp = if root.is_finite() {
            root.round().clamp(0.0, r_max as f64) as u64
        } else {
            0
        };
        let log_peak = self.log_term(n0, n12, rp);

        let cut = (-PRUNE_NATS).exp();
        let mut pos = Neumaier::default();
        let mut neg = Neumaier::default();
        let mut max_rel = 1.0_f64;
        pos.add(1.0);
        let sign_of = |r: u64| self.alternating && (r.abs_diff(rp)) % 2 == 1;

        // upward
        let mut rel = 1.0;
        let mut r = rp;
        while r < r_max {
            let rf = r as f64;
            rel *= (a0 - rf) * (a12 - rf) * z / ((rf + 1.0) * (big_l - rf));
            r += 1;
            max_rel = max_rel.max(rel);
            if sign_of(r) {
                neg.add(rel);
            } else {
                pos.add(rel);
            }
            if rel < cut * max_rel && (r == r_max || rel < 1.0) {
                break;
            }
        }
        // downward
        let mut rel = 1.0;
        let mut r = rp;
        while r > 0 {
            let rf = r as f64;
            rel *= rf * (big_l - rf + 1.0) / ((a0 - rf + 1.0) * (a12 - rf + 1.0) * z);
            r -= 1;
            max_rel = max_rel.max(rel);
            if sign_of(r) {
                neg.add(rel);
            } else {
                pos.add(rel);
            }
            if rel < cut * max_rel && rel < 1.0 {
                break;
            }
        }
        let mut sum = pos.total() - neg.total();
        if self.alternating && rp % 2 == 1 {
            sum = -sum;
        }
        if !(sum > 0.0) {
            return self.mixture_cell(n0, n12, f64::INFINITY);
        }
        let cancellation = (max_rel / sum).ln().max(0.0);
        if cancellation > RSUM_TRUST_NATS {
            return self.mixture_cell(n0, n12, cancellation);
        }
        CellValue {
            log_prob: log_peak + sum.ln(),
            cancellation,
            flagged: false,
        }
    }

    /// Classical-state evaluation as a positive series: the joint law is a
    /// negative-binomial mixture (over `k`) of products of independent
    /// negative-binomial laws with shape `M + k`.
    fn mixture_cell(&self, n0: u64, n12: u64, cancellation: f64) -> CellValue {
        let mx = self
            .mixture
            .as_ref()
            .expect("mixture coefficients exist for K > 0");
        let m = self.modes;
        let (a0, a12) = (n0 as f64, n12 as f64);
        let rho = mx.rho_eff;
        // largest term: larger root of the unit-ratio quadratic in k
        let qa = 1.0 - rho;
        let qb = (m + 1.0) - rho * (a0 + a12 + 2.0 * m);
        let qc = m - rho * (a0 + m) * (a12 + m);
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let root = (-qb + disc.sqrt()) / (2.0 * qa);
        let kp = if root.is_finite() && root > 0.0 {
            root.round() as u64
        } else {
            0
        };
        let kf = kp as f64;
        let log_peak = ln_gamma(a0 + m + kf) + ln_gamma(a12 + m + kf)
            - ln_gamma(m + kf)
            - self.ln_gamma_m
            - self.lf(kp)
            - self.lf(n0)
            - self.lf(n12)
            + mul_log(kp, mx.ln_rho)
            + m * mx.ln_1m_rho
            + a0 * mx.ln_t0
            + a12 * mx.ln_t12
            - (a0 + m + kf) * mx.ln_1p_t0
            - (a12 + m + kf) * mx.ln_1p_t12;

        let cut = (-PRUNE_NATS).exp();
        let mut acc = Neumaier::default();
        acc.add(1.0);
        let mut rel = 1.0;
        let mut k = kf;
        loop {
            let ratio = rho * (a0 + m + k) * (a12 + m + k) / ((k + 1.0) * (m + k));
            rel *= ratio;
            acc.add(rel);
            k += 1.0;
            if ratio < 1.0 && rel < cut {
                let limit = ratio.max(rho);
                acc.add(rel * limit / (1.0 - limit));
                break;
            }
        }
        let mut rel = 1.0;
        let mut k = kf;
        while k > 0.0 {
            rel *= k * (m + k - 1.0) / (rho * (a0 + m + k - 1.0) * (a12 + m + k - 1.0));
            acc.add(rel);
            k -= 1.0;
            if rel < cut {
                break;
            }
        }
        CellValue {
            log_prob: log_peak + acc.total().ln(),
            cancellation,
            flagged: cancellation > self.cancel_nats,
        }
    }

    /// Evaluates cells of row `n0` outward from `start` until they fall
    /// `PRUNE_NATS` below the row maximum and the remaining geometric tail
    /// bound is below `tail_rel` relative to it. Returns the row and an
    /// absolute bound on the mass left out.
    pub(crate) fn window_row(&self, n0: u64, start: u64, hi: u64, tail_rel: f64) -> (Row, f64) {
        let start = start.min(hi);
        let first = self.cell(n0, start);
        let mut peak = first.log_prob;
        let mut up: Vec<CellValue> = Vec::new();
        let mut down: Vec<CellValue> = Vec::new();
        let mut dropped = 0.0;

        let mut prev = first.log_prob;
        let mut j = start;
        while j < hi {
            j += 1;
            let c = self.cell(n0, j);
            up.push(c);
            peak = peak.max(c.log_prob);
            if let Some(bound) = tail_bound(prev, c.log_prob, peak, tail_rel) {
                dropped += bound;
                break;
            }
            prev = c.log_prob;
        }
        let mut prev = first.log_prob;
        let mut j = start;
        while j > 0 {
            j -= 1;
            let c = self.cell(n0, j);
            down.push(c);
            peak = peak.max(c.log_prob);
            if let Some(bound) = tail_bound(prev, c.log_prob, peak, tail_rel) {
                dropped += bound;
                break;
            }
            prev = c.log_prob;
        }
        let lo = start - down.len() as u64;
        let cells: Vec<CellValue> = down
            .into_iter()
            .rev()
            .chain(std::iter::once(first))
            .chain(up)
            .collect();
        (Row::from_cells(lo, &cells), dropped)
    }
}

/// Stopping rule for row windows: `Some(bound)` once `cur` is past the peak,
/// far below it, and the geometric tail bound is small.
fn tail_bound(prev: f64, cur: f64, peak: f64, tail_rel: f64) -> Option<f64> {
    if cur == f64::NEG_INFINITY {
        return if peak > f64::NEG_INFINITY {
            Some(0.0)
        } else {
            None
        };
    }
    if cur >= prev || cur > peak - PRUNE_NATS {
        return None;
    }
    let ratio = (cur - prev).exp();
    let bound = cur.exp() * ratio / (1.0 - ratio);
    if bound <= tail_rel * peak.exp() || cur - peak < -2.0 * PRUNE_NATS {
        Some(bound)
    } else {
        None
    }
}

/// One row `n0` of the grid, stored from column `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub start: u64,
    pub log_probs: Vec<f64>,
    pub flags: Vec<bool>,
    pub max_cancellation: f64,
}

impl Row {
    fn from_cells(start: u64, cells: &[CellValue]) -> Self {
        Row {
            start,
            log_probs: cells.iter().map(|c| c.log_prob).collect(),
            flags: cells.iter().map(|c| c.flagged).collect(),
            max_cancellation: cells
                .iter()
                .map(|c| c.cancellation)
                .filter(|c| c.is_finite())
                .fold(0.0, f64::max),
        }
    }

    pub fn end(&self) -> u64 {
        self.start + self.log_probs.len() as u64
    }

    pub fn get(&self, n12: u64) -> Option<f64> {
        if n12 < self.start {
            return None;
        }
        self.log_probs.get((n12 - self.start) as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub flagged_cells: u64,
    pub max_cancellation: f64,
}

/// Truncated joint photon-number distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPN {
    params: GsnParams,
    n0_max: u64,
    n12_max: u64,
    tail_mass_bound: f64,
    rows: Vec<Row>,
    dense: bool,
    quality: Quality,
}

impl JointPN {
    pub fn params(&self) -> &GsnParams {
        &self.params
    }
    pub fn n0_max(&self) -> u64 {
        self.n0_max
    }
    pub fn n12_max(&self) -> u64 {
        self.n12_max
    }
    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }
    pub fn quality(&self) -> Quality {
        self.quality
    }
    /// True when every row spans the full `[0, n12_max]` range.
    pub fn is_dense(&self) -> bool {
        self.dense
    }
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// ln p(n0, n12); −∞ outside the stored region.
    pub fn log_prob(&self, n0: u64, n12: u64) -> f64 {
        self.rows
            .get(n0 as usize)
            .and_then(|r| r.get(n12))
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, n0: u64, n12: u64) -> f64 {
        self.log_prob(n0, n12).exp()
    }

    pub fn is_flagged(&self, n0: u64, n12: u64) -> bool {
        self.rows
            .get(n0 as usize)
            .and_then(|r| {
                n12.checked_sub(r.start)
                    .and_then(|i| r.flags.get(i as usize).copied())
            })
            .unwrap_or(false)
    }

    /// Visits every stored cell as `(n0, n12, log_prob, flagged)`.
    pub fn cells(&self) -> impl Iterator<Item = (u64, u64, f64, bool)> + '_ {
        self.rows.iter().enumerate().flat_map(|(n0, row)| {
            row.log_probs
                .iter()
                .zip(&row.flags)
                .enumerate()
                .map(move |(i, (&lp, &f))| (n0 as u64, row.start + i as u64, lp, f))
        })
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = Neumaier::default();
        for (_, _, lp, _) in self.cells() {
            acc.add(lp.exp());
        }
        acc.total()
    }

    /// Location of the largest stored cell.
    pub fn argmax(&self) -> (u64, u64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (a, b, lp, _) in self.cells() {
            if lp > best.2 {
                best = (a, b, lp);
            }
        }
        (best.0, best.1)
    }

    pub(crate) fn from_dense_probs(
        params: GsnParams,
        n0_max: u64,
        n12_max: u64,
        probs: &[f64],
        tail_mass_bound: f64,
    ) -> Self {
        let width = (n12_max + 1) as usize;
        let rows = probs
            .chunks(width)
            .map(|c| Row {
                start: 0,
                log_probs: c.iter().map(|&p| ln_or_neg_inf(p)).collect(),
                flags: vec![false; c.len()],
                max_cancellation: 0.0,
            })
            .collect();
        JointPN {
            params,
            n0_max,
            n12_max,
            tail_mass_bound,
            rows,
            dense: true,
            quality: Quality {
                flagged_cells: 0,
                max_cancellation: 0.0,
            },
        }
    }
}

/// Joint distribution truncated so that the analytic marginal tails beyond
/// the grid total less than `target_tail`.
pub fn joint_pn(g: &GsnParams, target_tail: f64) -> Result<JointPN> {
    joint_pn_with(
        g,
        &JointOptions {
            target_tail,
            ..JointOptions::default()
        },
    )
}

pub fn joint_pn_with(g: &GsnParams, opts: &JointOptions) -> Result<JointPN> {
    if !(opts.target_tail > 0.0 && opts.target_tail < 1.0) {
        return Err(Error::Domain {
            what: "target tail mass",
            value: opts.target_tail,
        });
    }
    let (n0_max, t0) = truncation_bound(g.b0(), g.modes(), 0.5 * opts.target_tail);
    let (n12_max, t12) = truncation_bound(g.b12(), g.modes(), 0.5 * opts.target_tail);
    build(g, n0_max, n12_max, t0 + t12, opts)
}

/// Joint distribution on the explicit rectangle `[0, n0_max] × [0, n12_max]`.
pub fn joint_pn_on(g: &GsnParams, n0_max: u64, n12_max: u64) -> Result<JointPN> {
    let tail = mandel_rice_upper_tail(n0_max, g.b0(), g.modes())
        + mandel_rice_upper_tail(n12_max, g.b12(), g.modes());
    build(g, n0_max, n12_max, tail, &JointOptions::default())
}

fn build(
    g: &GsnParams,
    n0_max: u64,
    n12_max: u64,
    tail: f64,
    opts: &JointOptions,
) -> Result<JointPN> {
    let cells = (n0_max + 1).saturating_mul(n12_max + 1);
    let dense = cells <= opts.cell_budget;
    let kernel = CellKernel::new(
        g,
        n0_max.max(n12_max),
        n0_max + n12_max,
        opts.cancellation_nats,
    );
    let p = cond_binomial_p(g);
    let beta = cond_nb_beta(g);
    let row_tail = opts.target_tail * 1e-3 / (n0_max + 1) as f64;

    let built: Vec<(Row, f64)> = (0..=n0_max)
        .into_par_iter()
        .map(|n0| {
            if dense {
                let cells: Vec<CellValue> = (0..=n12_max).map(|n12| kernel.cell(n0, n12)).collect();
                (Row::from_cells(0, &cells), 0.0)
            } else {
                let mean = n0 as f64 * p + (n0 as f64 + g.modes()) * beta;
                let start = mean.round().max(0.0) as u64;
                kernel.window_row(n0, start, n12_max, row_tail)
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(built.len());
    let mut dropped = 0.0;
    for (row, d) in built {
        dropped += d;
        rows.push(row);
    }
    let quality = Quality {
        flagged_cells: rows
            .iter()
            .map(|r| r.flags.iter().filter(|&&f| f).count() as u64)
            .sum(),
        max_cancellation: rows.iter().map(|r| r.max_cancellation).fold(0.0, f64::max),
    };
    if quality.flagged_cells > 0 {
        log::warn!(
            "{} cells lost more than {} nats to cancellation",
            quality.flagged_cells,
            opts.cancellation_nats
        );
    }
    Ok(JointPN {
        params: *g,
        n0_max,
        n12_max,
        tail_mass_bound: tail + dropped,
        rows,
        dense,
        quality,
    })
}

/// Row or column sums.
pub fn marginal(j: &JointPN, axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Single => j
            .rows
            .iter()
            .map(|r| {
                let mut acc = Neumaier::default();
                r.log_probs.iter().for_each(|lp| acc.add(lp.exp()));
                acc.total()
            })
            .collect(),
        Axis::Compound => {
            let mut acc = vec![Neumaier::default(); (j.n12_max + 1) as usize];
            for (_, n12, lp, _) in j.cells() {
                acc[n12 as usize].add(lp.exp());
            }
            acc.iter().map(|a| a.total()).collect()
        }
    }
}

/// Success probability of the binomial part of the conditional law,
/// `−K/B0` (negative for classical states).
fn cond_binomial_p(g: &GsnParams) -> f64 {
    if g.b0() == 0.0 {
        0.0
    } else {
        -g.k012() / g.b0()
    }
}

/// Per-unit-shape mean of the negative-binomial part, `(B12 + K)/(1 + B0)`.
fn cond_nb_beta(g: &GsnParams) -> f64 {
    g.noise12().max(0.0) / (1.0 + g.b0())
}

/// Compound-field distribution conditioned on `n0` detected in the single
/// field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPN {
    pub n0: u64,
    pub start: u64,
    /// Normalized log-probabilities from `start`.
    pub log_probs: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub fano: f64,
    pub flagged: bool,
    /// Bound on the normalized mass outside the window.
    pub tail_mass_bound: f64,
}

impl ConditionalPN {
    pub fn prob(&self, n12: u64) -> f64 {
        n12.checked_sub(self.start)
            .and_then(|i| self.log_probs.get(i as usize))
            .map_or(0.0, |lp| lp.exp())
    }
}

/// Exact-sum conditional distribution. Normalization is done in log space,
/// so the (possibly underflowing) single-field marginal is never formed.
pub fn conditional(g: &GsnParams, n0: u64, target_tail: f64) -> Result<ConditionalPN> {
    if !(target_tail > 0.0 && target_tail < 1.0) {
        return Err(Error::Domain {
            what: "target tail mass",
            value: target_tail,
        });
    }
    let p = cond_binomial_p(g);
    let beta = cond_nb_beta(g);
    let mean = n0 as f64 * p + (n0 as f64 + g.modes()) * beta;
    let var = (n0 as f64 * p * (1.0 - p) + (n0 as f64 + g.modes()) * beta * (1.0 + beta)).max(1.0);
    let guess_hi = (mean + 60.0 * var.sqrt()) as u64 + 64;
    let kernel = CellKernel::new(
        g,
        n0.max(guess_hi),
        n0 + guess_hi,
        DEFAULT_CANCELLATION_NATS,
    );
    let (row, dropped) = kernel.window_row(
        n0,
        mean.round().max(0.0) as u64,
        u64::MAX / 4,
        target_tail * 1e-3,
    );

    let log_norm = log_sum_exp(&row.log_probs);
    if log_norm == f64::NEG_INFINITY || !log_norm.is_finite() {
        return Err(Error::DegenerateNormalization(n0));
    }
    let log_probs: Vec<f64> = row.log_probs.iter().map(|lp| lp - log_norm).collect();
    let mut m1 = Neumaier::default();
    for (i, lp) in log_probs.iter().enumerate() {
        m1.add((row.start + i as u64) as f64 * lp.exp());
    }
    let mean = m1.total();
    let mut m2 = Neumaier::default();
    for (i, lp) in log_probs.iter().enumerate() {
        let d = (row.start + i as u64) as f64 - mean;
        m2.add(d * d * lp.exp());
    }
    let variance = m2.total();
    let fano = if mean > 0.0 {
        variance / mean
    } else {
        f64::NAN
    };
    Ok(ConditionalPN {
        n0,
        start: row.start,
        log_probs,
        mean,
        variance,
        fano,
        flagged: row.flags.iter().any(|&f| f),
        tail_mass_bound: dropped / log_norm.exp(),
    })
}

/// Closed-form conditional Fano factor.
pub fn fano_closed(g: &GsnParams, n0: u64) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::Domain {
            what: "conditioning photon number",
            value: 0.0,
        });
    }
    let x = 1.0 + g.modes() / n0 as f64;
    let beta = cond_nb_beta(g);
    let k_over_b0 = -cond_binomial_p(g);
    let den = x * beta - k_over_b0;
    if den.abs() <= f64::MIN_POSITIVE {
        return Err(Error::DivisionByZero("conditional Fano factor"));
    }
    Ok(1.0 + (x * beta * beta - k_over_b0 * k_over_b0) / den)
}

/// Exact n0 → ∞ limit of [`fano_closed`]: `1 + (B12+K)/(1+B0) + K/B0`.
pub fn fano_limit(g: &GsnParams) -> f64 {
    1.0 + cond_nb_beta(g) - cond_binomial_p(g)
}

/// The lossless-regime approximation `1 + K/B0` of the limit.
pub fn fano_lossless_approx(g: &GsnParams) -> f64 {
    1.0 - cond_binomial_p(g)
}

/// Distribution of `n0 − n12`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencePN {
    /// Value of the first entry of `probs`.
    pub min_offset: i64,
    pub probs: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub mean0: f64,
    pub mean12: f64,
    /// variance / (⟨n0⟩ + ⟨n12⟩)
    pub r_from_dist: f64,
}

impl DifferencePN {
    pub fn prob(&self, n: i64) -> f64 {
        let i = n - self.min_offset;
        if i < 0 {
            return 0.0;
        }
        self.probs.get(i as usize).copied().unwrap_or(0.0)
    }
}

pub fn difference_distribution(j: &JointPN) -> DifferencePN {
    let min_offset = -(j.n12_max as i64);
    let len = (j.n0_max + j.n12_max + 1) as usize;
    let mut bins = vec![Neumaier::default(); len];
    let mut s0 = Neumaier::default();
    let mut s12 = Neumaier::default();
    let mut mass = Neumaier::default();
    for (n0, n12, lp, _) in j.cells() {
        let p = lp.exp();
        bins[(n0 as i64 - n12 as i64 - min_offset) as usize].add(p);
        s0.add(n0 as f64 * p);
        s12.add(n12 as f64 * p);
        mass.add(p);
    }
    let probs: Vec<f64> = bins.iter().map(|b| b.total()).collect();
    let total = mass.total();
    let mean0 = s0.total() / total;
    let mean12 = s12.total() / total;
    let mean = mean0 - mean12;
    let mut v = Neumaier::default();
    for (i, p) in probs.iter().enumerate() {
        let d = (i as i64 + min_offset) as f64 - mean;
        v.add(d * d * p);
    }
    let variance = v.total() / total;
    let denom = mean0 + mean12;
    DifferencePN {
        min_offset,
        probs,
        mean,
        variance,
        mean0,
        mean12,
        r_from_dist: if denom > 0.0 {
            variance / denom
        } else {
            f64::NAN
        },
    }
}
