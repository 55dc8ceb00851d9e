//! The seven subcommands. Each reads the parts of the configuration it needs,
//! writes its files into the output directory and returns their paths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::json;
use trimode::distributions::{
    conditional, fano_closed, joint_pn_on, joint_pn_with, JointOptions, JointPN,
};
use trimode::dynamics::{predict, CouplingConfig};
use trimode::efficiency::{eta0_crit_min, eta_crit, fano_contour, fano_vs_eta};
use trimode::moments::{
    accumulate_par, diagnostics, estimate_gsn, subtract_noise, to_intensity_moments,
    to_photon_moments, DiagnosticScalars, EfficiencyVector, GsnEstimate, MomentKind,
    PhotocountMoments,
};
use trimode::quasiprob::{quasi_grid, s_threshold, OrderedParams, QuasiAxes};
use trimode::sampler::{sample_pulses, SimConfig};
use trimode::GsnParams;

use crate::config::{Kind, MomentsLiteral, ParamsSection, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::io::{num, read_pulses, CsvOut, Header};

/// Slack for probability self-checks beyond the analytic tail bound.
const SUM_SLACK: f64 = 1e-9;

fn describe(g: &GsnParams) -> String {
    format!(
        "b0={} b12={} d012={} k012={} modes={}",
        num(g.b0()),
        num(g.b12()),
        num(g.d012()),
        num(g.k012()),
        num(g.modes())
    )
}

fn efficiency(cfg: &RunConfig) -> CliResult<EfficiencyVector> {
    let e = &cfg.efficiency;
    EfficiencyVector::new(e.eta0, e.eta1, e.eta2).map_err(|err| CliError::Config(err.to_string()))
}

fn literal(m: &MomentsLiteral, kind: MomentKind) -> CliResult<PhotocountMoments> {
    PhotocountMoments::new(m.mean0, m.mean12, m.sq0, m.sq12, m.cross, m.n_pulses, kind)
        .ctx("moments literal in configuration")
}

fn load_moments(
    pulses: Option<&Path>,
    lit: Option<&MomentsLiteral>,
    kind: MomentKind,
) -> CliResult<PhotocountMoments> {
    match (pulses, lit) {
        (Some(path), _) => {
            let recs = read_pulses(path)?;
            let m = accumulate_par(&recs).ctx(path.display())?;
            Ok(PhotocountMoments { kind, ..m })
        }
        (None, Some(l)) => literal(l, kind),
        (None, None) => Err(CliError::Config("no moment source".into())),
    }
}

/// Per-level estimation results.
#[derive(Debug, Clone)]
pub struct Level {
    pub moments: PhotocountMoments,
    pub estimate: GsnEstimate,
    pub diagnostics: DiagnosticScalars,
    pub s_threshold: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct Estimates {
    pub photocount: Level,
    pub photon: Level,
}

fn level(m: PhotocountMoments) -> CliResult<Level> {
    let what = match m.kind {
        MomentKind::Photocount => "photocount level",
        MomentKind::Photon => "photon level",
    };
    let estimate = estimate_gsn(&to_intensity_moments(&m)).ctx(what)?;
    if estimate.spread_suspect() {
        log::warn!(
            "{what}: mode numbers M0 = {:.4} and M12 = {:.4} differ by more than 25%",
            estimate.m0,
            estimate.m12
        );
    }
    Ok(Level {
        moments: m,
        diagnostics: diagnostics(&m, &estimate.params),
        s_threshold: s_threshold(&estimate.params).map_err(|e| e.to_string()),
        estimate,
    })
}

/// Moments → parameters at both levels, with optional noise subtraction.
pub fn estimate_levels(cfg: &RunConfig) -> CliResult<Estimates> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("an [input] section is required".into()))?;
    let eta = efficiency(cfg)?;
    let kind: MomentKind = input.kind.into();
    let mut m = load_moments(input.pulses.as_deref(), input.moments.as_ref(), kind)?;
    if let Some(noise) = &cfg.noise {
        if kind != MomentKind::Photocount {
            return Err(CliError::Config(
                "noise subtraction applies to photocount input".into(),
            ));
        }
        let dark = load_moments(
            noise.pulses.as_deref(),
            noise.moments.as_ref(),
            MomentKind::Photocount,
        )?;
        m = subtract_noise(&m, &dark).ctx("noise subtraction")?;
    }
    let (pc, ph) = match kind {
        MomentKind::Photocount => (m, to_photon_moments(&m, &eta).ctx("efficiency correction")?),
        MomentKind::Photon => {
            if eta != EfficiencyVector::uniform(1.0).expect("unit efficiency") {
                return Err(CliError::Config(
                    "photon-level input cannot be combined with efficiencies below one".into(),
                ));
            }
            (
                PhotocountMoments {
                    kind: MomentKind::Photocount,
                    ..m
                },
                m,
            )
        }
    };
    Ok(Estimates {
        photocount: level(pc)?,
        photon: level(ph)?,
    })
}

fn explicit_params(p: &ParamsSection) -> CliResult<GsnParams> {
    let r = match (p.d012, p.k012) {
        (Some(d), None) => GsnParams::new(p.b0, p.b12, d, p.modes),
        (None, Some(k)) => GsnParams::from_determinant(p.b0, p.b12, k, p.modes),
        _ => unreachable!("validated at load"),
    };
    r.ctx("[params]")
}

/// Parameters for the distribution commands: `[params]` if present,
/// otherwise estimated from `[input]` at `analysis.level`.
pub fn resolve_params(cfg: &RunConfig) -> CliResult<(GsnParams, String)> {
    if let Some(p) = &cfg.params {
        return Ok((explicit_params(p)?, "configuration [params]".into()));
    }
    if cfg.input.is_none() {
        return Err(CliError::Config(
            "needs a [params] or an [input] section".into(),
        ));
    }
    let est = estimate_levels(cfg)?;
    Ok(match cfg.analysis.level {
        Kind::Photocount => (
            est.photocount.estimate.params,
            "estimated from [input], photocount level".into(),
        ),
        Kind::Photon => (
            est.photon.estimate.params,
            "estimated from [input], photon level".into(),
        ),
    })
}

fn level_json(l: &Level) -> serde_json::Value {
    json!({
        "moments": l.moments,
        "params": l.estimate.params,
        "m0": l.estimate.m0,
        "m12": l.estimate.m12,
        "mode_spread": l.estimate.mode_spread,
        "mode_spread_suspect": l.estimate.spread_suspect(),
        "diagnostics": l.diagnostics,
        "s_threshold": match &l.s_threshold {
            Ok(s) => json!(s),
            Err(e) => json!({ "error": e }),
        },
    })
}

fn level_table(name: &str, l: &Level) -> String {
    let g = &l.estimate.params;
    let d = &l.diagnostics;
    let mut t = String::new();
    let _ = writeln!(t, "[{name}]");
    let rows: [(&str, String); 13] = [
        ("B0", num(g.b0())),
        ("B12", num(g.b12())),
        ("|D012|", num(g.d012())),
        ("M", num(g.modes())),
        ("M0", num(l.estimate.m0)),
        ("M12", num(l.estimate.m12)),
        ("K012", num(d.k012)),
        ("R", num(d.r)),
        ("lambda", num(d.lambda)),
        ("C", num(d.cov_c)),
        ("wave var diff", num(d.wave_var_diff)),
        ("diff var", num(d.diff_var)),
        (
            "s_th",
            match &l.s_threshold {
                Ok(s) => num(*s),
                Err(e) => e.clone(),
            },
        ),
    ];
    for (k, v) in rows {
        let _ = writeln!(t, "  {k:<14} {v}");
    }
    t
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let est = estimate_levels(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(e, out))?;
    let report = json!({
        "generator": format!("trimode {}", env!("CARGO_PKG_VERSION")),
        "command": "estimate",
        "efficiency": {
            "eta0": cfg.efficiency.eta0,
            "eta1": cfg.efficiency.eta1,
            "eta2": cfg.efficiency.eta2,
        },
        "noise_subtracted": cfg.noise.is_some(),
        "photocount": level_json(&est.photocount),
        "photon": level_json(&est.photon),
    });
    let json_path = out.join("estimate.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, text + "\n").map_err(|e| CliError::io(e, &json_path))?;
    let table = format!(
        "{}\n{}",
        level_table("photocount", &est.photocount),
        level_table("photon", &est.photon)
    );
    let txt_path = out.join("estimate.txt");
    std::fs::write(&txt_path, &table).map_err(|e| CliError::io(e, &txt_path))?;
    print!("{table}");
    Ok(vec![json_path, txt_path])
}

fn joint(cfg: &RunConfig, g: &GsnParams) -> CliResult<JointPN> {
    let gr = &cfg.grids;
    match (gr.n0_max, gr.n12_max) {
        (Some(a), Some(b)) => joint_pn_on(g, a, b),
        _ => joint_pn_with(
            g,
            &JointOptions {
                target_tail: gr.target_tail,
                cell_budget: gr.cell_budget,
                cancellation_nats: gr.cancellation_nats,
            },
        ),
    }
    .ctx(describe(g))
}

pub fn cmd_joint(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (g, source) = resolve_params(cfg)?;
    let j = joint(cfg, &g)?;
    let q = j.quality();
    let mut h = Header::new("joint");
    h.push("params", describe(&g))
        .push("params_source", source)
        .push("n0_max", j.n0_max())
        .push("n12_max", j.n12_max())
        .push(
            "storage",
            if j.is_dense() {
                "dense"
            } else {
                "windowed rows"
            },
        )
        .push("tail_mass_bound", num(j.tail_mass_bound()))
        .push("flagged_cells", q.flagged_cells)
        .push("max_cancellation_nats", num(q.max_cancellation));
    let mut w = CsvOut::create(
        out,
        "joint.csv",
        &h,
        &["n0", "n12", "prob", "log_prob", "flag"],
    )?;
    let mut sum = 0.0;
    for (n0, n12, lp, flag) in j.cells() {
        let p = lp.exp();
        sum += p;
        w.row(&[
            n0.to_string(),
            n12.to_string(),
            num(p),
            num(lp),
            u8::from(flag).to_string(),
        ])?;
    }
    let path = w.finish()?;
    check_mass("joint distribution", sum, j.tail_mass_bound())?;
    Ok(vec![path])
}

fn check_mass(what: &str, sum: f64, tail: f64) -> CliResult<()> {
    if (sum - 1.0).abs() > tail + SUM_SLACK {
        return Err(CliError::Numeric(format!(
            "{what}: emitted probabilities sum to {sum}, outside 1 ± {tail:e}"
        )));
    }
    Ok(())
}

pub fn cmd_conditional(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (g, source) = resolve_params(cfg)?;
    let a = &cfg.analysis;
    let mut h = Header::new("conditional");
    h.push("params", describe(&g))
        .push("params_source", source)
        .push("n0_range", format!("{}..={}", a.n0_min, a.n0_max))
        .push("target_tail", num(cfg.grids.target_tail));
    let mut dist = CsvOut::create(
        out,
        "conditional.csv",
        &h,
        &["n0", "n12", "prob", "log_prob", "flag"],
    )?;
    let mut fano = CsvOut::create(
        out,
        "conditional_fano.csv",
        &h,
        &[
            "n0",
            "mean",
            "variance",
            "fano",
            "fano_closed",
            "tail_mass_bound",
            "flag",
        ],
    )?;
    let mut prev: Option<(u64, f64)> = None;
    let mut crossing = None;
    for n0 in a.n0_min..=a.n0_max {
        let c = conditional(&g, n0, cfg.grids.target_tail)
            .ctx(format!("n0 = {n0}, {}", describe(&g)))?;
        let closed = fano_closed(&g, n0).ctx(format!("n0 = {n0}, {}", describe(&g)))?;
        let mut sum = 0.0;
        for (i, lp) in c.log_probs.iter().enumerate() {
            let p = lp.exp();
            sum += p;
            dist.row(&[
                n0.to_string(),
                (c.start + i as u64).to_string(),
                num(p),
                num(*lp),
                u8::from(c.flagged).to_string(),
            ])?;
        }
        check_mass(
            &format!("conditional distribution at n0 = {n0}"),
            sum,
            c.tail_mass_bound,
        )?;
        fano.row(&[
            n0.to_string(),
            num(c.mean),
            num(c.variance),
            num(c.fano),
            num(closed),
            num(c.tail_mass_bound),
            u8::from(c.flagged).to_string(),
        ])?;
        if let Some((p0, pf)) = prev {
            if crossing.is_none() && (pf >= 1.0) != (c.fano >= 1.0) {
                crossing = Some((p0, n0));
            }
        }
        prev = Some((n0, c.fano));
    }
    match crossing {
        Some((a, b)) => println!("conditional Fano factor crosses 1 between n0 = {a} and n0 = {b}"),
        None => println!("conditional Fano factor does not cross 1 in the requested range"),
    }
    Ok(vec![dist.finish()?, fano.finish()?])
}

fn order_label(s: f64) -> String {
    format!("{s}").replace('-', "m")
}

pub fn cmd_quasi(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (g, source) = resolve_params(cfg)?;
    let gr = &cfg.grids;
    let mut paths = Vec::new();
    for &s in &cfg.analysis.s {
        let ctx = format!("s = {s}, {}", describe(&g));
        let q = OrderedParams::new(&g, s).ctx(&ctx)?;
        let axes = match (gr.w0_max, gr.w12_max) {
            (Some(a), Some(b)) => QuasiAxes::uniform(a, b, gr.quasi_points),
            _ => QuasiAxes::auto(&q, gr.quasi_points),
        }
        .ctx(&ctx)?;
        let grid = quasi_grid(&g, s, &axes).ctx(&ctx)?;
        let mut h = Header::new("quasi");
        h.push("params", describe(&g))
            .push("params_source", &source)
            .push("s", num(s))
            .push("b0s", num(q.b0s))
            .push("b12s", num(q.b12s))
            .push("k012s", num(q.k012s))
            .push("branch", format!("{:?}", grid.branch))
            .push(
                "negative_cells",
                grid.values.iter().filter(|v| **v < 0.0).count(),
            );
        if let Ok(sth) = s_threshold(&g) {
            h.push("s_threshold", num(sth));
        }
        let name = format!("quasi_s{}.csv", order_label(s));
        let mut w = CsvOut::create(out, &name, &h, &["W0", "W12", "value"])?;
        for (i, w0) in grid.w0.iter().enumerate() {
            for (j, w12) in grid.w12.iter().enumerate() {
                w.row(&[num(*w0), num(*w12), num(grid.get(i, j))])?;
            }
        }
        paths.push(w.finish()?);
    }
    Ok(paths)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (g, source) = resolve_params(cfg)?;
    let a = &cfg.analysis;
    let etas = linspace(a.eta_min, 1.0, a.eta_points);
    let mut h = Header::new("sweep");
    h.push("params", describe(&g)).push("params_source", source);
    match eta0_crit_min(&g) {
        Ok(e) => h.push("eta0_crit_min", num(e)),
        Err(e) => h.push("eta0_crit_min", e),
    };

    let mut curve = CsvOut::create(out, "fano_vs_eta.csv", &h, &["n0", "eta", "fano"])?;
    for &n0 in &a.sweep_n0 {
        let c = fano_vs_eta(&g, n0, &etas).ctx(format!("n0 = {n0}, {}", describe(&g)))?;
        for (e, f) in c.eta.iter().zip(&c.fano) {
            curve.row(&[n0.to_string(), num(*e), num(*f)])?;
        }
    }

    let mut crit = CsvOut::create(out, "eta_crit.csv", &h, &["n0", "eta_crit"])?;
    for &n0 in &a.crit_n0 {
        // a missing root is a property of the state, not a failure
        let v = eta_crit(&g, n0).map(num).unwrap_or_default();
        crit.row(&[n0.to_string(), v])?;
    }

    let grid = linspace(0.01, 1.0, cfg.grids.contour_points);
    let contour = fano_contour(&g, &grid, &grid).ctx(describe(&g))?;
    let mut ch = h.clone();
    ch.push("missing", "cells above the plot ceiling are left empty");
    let mut cw = CsvOut::create(out, "fano_contour.csv", &ch, &["eta0", "eta12", "fano_inf"])?;
    for (i, e0) in contour.eta0.iter().enumerate() {
        for (j, e12) in contour.eta12.iter().enumerate() {
            cw.row(&[
                num(*e0),
                num(*e12),
                contour.get(i, j).map(num).unwrap_or_default(),
            ])?;
        }
    }
    Ok(vec![curve.finish()?, crit.finish()?, cw.finish()?])
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("a [simulate] section is required".into()))?;
    let p = cfg
        .params
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [params] section".into()))?;
    let g = explicit_params(p)?;
    let sc = SimConfig {
        params: g,
        eta: efficiency(cfg)?,
        n_pulses: sim.n_pulses,
        seed: sim.seed,
        detection: sim.detection,
        noise: sim.noise,
    };
    let pulses = sample_pulses(&sc).ctx(describe(&g))?;
    let mut h = Header::new("simulate");
    h.push("params", describe(&g))
        .push(
            "efficiency",
            format!(
                "{} {} {}",
                cfg.efficiency.eta0, cfg.efficiency.eta1, cfg.efficiency.eta2
            ),
        )
        .push("n_pulses", sim.n_pulses)
        .push("seed", sim.seed)
        .push("detection", format!("{:?}", sim.detection));
    if let Some(n) = &sim.noise {
        h.push("noise", format!("{n:?}"));
    }
    let mut w = CsvOut::create(out, "pulses.csv", &h, &["pulse", "m0", "m12"])?;
    for (i, (m0, m12)) in pulses.iter().enumerate() {
        w.row(&[i.to_string(), m0.to_string(), m12.to_string()])?;
    }
    Ok(vec![w.finish()?])
}

pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = cfg
        .predict
        .as_ref()
        .ok_or_else(|| CliError::Config("a [predict] section is required".into()))?;
    let g0 = Complex64::new(p.gamma0, p.gamma0_im);
    let g1 = Complex64::new(p.gamma1, p.gamma1_im);
    let mut h = Header::new("predict");
    h.push("gamma0", g0)
        .push("gamma1", g1)
        .push("modes", num(p.modes));
    let mut w = CsvOut::create(
        out,
        "predict.csv",
        &h,
        &[
            "t", "B0", "B1", "B2", "B12", "D012", "K012", "K01", "K02", "K12",
        ],
    )?;
    for t in linspace(0.0, p.t_max, p.points) {
        let ctx = format!("gamma0 = {g0}, gamma1 = {g1}, t = {t}");
        let c = CouplingConfig::new(g0, g1, t, p.modes).ctx(&ctx)?;
        let (_, tri, g) = predict(&c).ctx(&ctx)?;
        w.row(&[
            num(t),
            num(tri.b0),
            num(tri.b1),
            num(tri.b2),
            num(g.b12()),
            num(g.d012()),
            num(g.k012()),
            num(tri.k01()),
            num(tri.k02()),
            num(tri.k12()),
        ])?;
    }
    Ok(vec![w.finish()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn unit_efficiency_photon_input_has_identical_levels() {
        let c = cfg("[input]\nkind = \"photon\"\nmoments = { mean0 = 20.0, mean12 = 22.0, sq0 = 500.0, sq12 = 600.0, cross = 530.0 }\n");
        let e = estimate_levels(&c).unwrap();
        assert_eq!(e.photocount.estimate.params, e.photon.estimate.params);
        assert_eq!(e.photocount.diagnostics, e.photon.diagnostics);
    }

    #[test]
    fn photon_input_with_losses_is_a_config_error() {
        let c = cfg("[efficiency]\neta0 = 0.5\neta1 = 0.5\neta2 = 0.5\n[input]\nkind = \"photon\"\nmoments = { mean0 = 20.0, mean12 = 22.0, sq0 = 500.0, sq12 = 600.0, cross = 530.0 }\n");
        assert!(matches!(estimate_levels(&c), Err(CliError::Config(_))));
    }

    #[test]
    fn params_section_takes_precedence() {
        let c = cfg("[params]\nb0 = 1.0\nb12 = 2.0\nk012 = -0.5\nmodes = 3.0\n");
        let (g, src) = resolve_params(&c).unwrap();
        assert_eq!(g.k012(), -0.5);
        assert!(src.contains("[params]"));
        assert!(matches!(resolve_params(&cfg("")), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_params_are_data_errors() {
        let c = cfg("[params]\nb0 = 1.0\nb12 = 1.0\nd012 = 3.0\nmodes = 1.0\n");
        assert!(matches!(resolve_params(&c), Err(CliError::Data(_))));
    }

    #[test]
    fn order_labels_are_file_safe() {
        assert_eq!(order_label(0.4), "0.4");
        assert_eq!(order_label(-0.5), "m0.5");
    }
}
