//! End-to-end acceptance checks against the published measurement.
//!
//! Prints every sub-check, then one PASS/FAIL line per criterion, and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimode::distributions::{conditional, joint_pn, joint_pn_on, log_mandel_rice, marginal, Axis};
use trimode::dynamics::{predict, CouplingConfig};
use trimode::efficiency::{eta0_crit_bisect, eta0_crit_min, scale};
use trimode::moments::{
    accumulate, diagnostics, estimate_gsn, to_intensity_moments, to_photon_moments,
    EfficiencyVector, GsnEstimate, MomentKind, PhotocountMoments,
};
use trimode::quasiprob::{mandel_transform, quasi_grid, s_threshold, OrderedParams, QuasiAxes};
use trimode::sampler::{batch_standard_errors, sample_pulses, Detection, SimConfig};
use trimode::GsnParams;

const ETA: f64 = 0.28;
const MODES: f64 = 13.3665;

fn measured_counts() -> PhotocountMoments {
    PhotocountMoments::new(
        1225.183,
        1186.138,
        1_609_827.0,
        1_518_257.0,
        1_562_402.0,
        0,
        MomentKind::Photocount,
    )
    .unwrap()
}

fn photoelectron() -> GsnParams {
    GsnParams::new(87.765104, 92.861384, 90.371968, MODES).unwrap()
}

fn photon() -> GsnParams {
    GsnParams::new(313.447, 331.648, 322.757, MODES).unwrap()
}

fn photon_moments() -> PhotocountMoments {
    to_photon_moments(&measured_counts(), &EfficiencyVector::uniform(ETA).unwrap()).unwrap()
}

fn estimate(m: &PhotocountMoments) -> GsnEstimate {
    estimate_gsn(&to_intensity_moments(m)).unwrap()
}

struct Report {
    checks: Vec<(String, bool)>,
}

impl Report {
    fn new() -> Self {
        Report { checks: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.checks.push((label.into(), ok));
    }

    fn rel(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let r = ((got - want) / want).abs();
        self.check(
            format!("{label}: {got:.8} vs {want} (rel {r:.2e}, tol {tol:e})"),
            r <= tol,
        );
    }

    fn abs(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let d = (got - want).abs();
        self.check(
            format!("{label}: {got:.6} vs {want} (diff {d:.2e}, tol {tol})"),
            d <= tol,
        );
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

fn coefficients() -> Report {
    let mut r = Report::new();
    let e = estimate(&measured_counts());
    r.rel("B0", e.params.b0(), 87.765104, 1e-4);
    r.rel("B12", e.params.b12(), 92.861384, 1e-4);
    r.rel("|D012|", e.params.d012(), 90.371968, 1e-4);
    r.rel("M0", e.m0, 13.95980, 1e-4);
    r.rel("M12", e.m12, 12.77321, 1e-4);
    r.rel("M", e.params.modes(), MODES, 1e-4);
    r
}

fn photon_level() -> Report {
    let mut r = Report::new();
    let p = photon_moments();
    r.rel("<n0>", p.mean0, 4375.654, 1e-4);
    r.rel("<n0^2>", p.sq0, 20_522_260.0, 1e-4);
    r.rel("<n0 n12>", p.cross, 19_928_600.0, 1e-4);
    r.rel("<n12>", p.mean12, 4236.21, 1e-4);
    let e = estimate(&p).params;
    r.rel("B0", e.b0(), 313.447, 1e-3);
    r.rel("B12", e.b12(), 331.648, 1e-3);
    r.rel("|D012|", e.d012(), 322.757, 1e-3);
    r.rel("M", e.modes(), MODES, 1e-3);
    r
}

fn diagnostic_scalars() -> Report {
    let mut r = Report::new();
    let pe = photoelectron();
    let ph = GsnParams::new(pe.b0() / ETA, pe.b12() / ETA, pe.d012() / ETA, MODES).unwrap();
    let levels = [
        (
            "photoelectron",
            diagnostics(&measured_counts(), &pe),
            [-17.104, 0.954, 0.882, 0.991, -110.572],
        ),
        (
            "photon",
            diagnostics(&photon_moments(), &ph),
            [-218.158, 0.837, 0.581, 0.990, -1406.699],
        ),
    ];
    for (name, d, want) in levels {
        r.abs(&format!("{name} K012"), d.k012, want[0], 0.05);
        r.abs(&format!("{name} R"), d.r, want[1], 0.003);
        r.abs(&format!("{name} lambda"), d.lambda, want[2], 0.003);
        r.abs(&format!("{name} C"), d.cov_c, want[3], 0.003);
        r.rel(
            &format!("{name} wave variance"),
            d.wave_var_diff,
            want[4],
            5e-3,
        );
    }
    r
}

fn ordering_thresholds() -> Report {
    let mut r = Report::new();
    let pe = s_threshold(&estimate(&measured_counts()).params).unwrap();
    let ph = s_threshold(&estimate(&photon_moments()).params).unwrap();
    r.abs("photoelectron s_th", pe, 0.811, 0.002);
    r.abs("photon s_th", ph, 0.324, 0.002);
    r
}

fn conditional_boundary() -> Report {
    let mut r = Report::new();
    let ph = photon();
    let fano: Vec<f64> = (1..=1000u64)
        .map(|n0| conditional(&ph, n0, 1e-10).unwrap().fano)
        .collect();
    for n0 in 1..=5usize {
        r.check(
            format!("photon F({n0}) = {:.6} >= 1", fano[n0 - 1]),
            fano[n0 - 1] >= 1.0,
        );
    }
    let worst = (6..=1000usize)
        .map(|n| (n, fano[n - 1]))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    r.check(
        format!(
            "photon F < 1 on [6, 1000] (largest F({}) = {:.6})",
            worst.0, worst.1
        ),
        worst.1 < 1.0,
    );
    let pe = photoelectron();
    let least = (1..=1000u64)
        .map(|n0| (n0, conditional(&pe, n0, 1e-10).unwrap().fano))
        .fold((0, f64::MAX), |a, b| if b.1 < a.1 { b } else { a });
    r.check(
        format!(
            "photoelectron F > 1 on [1, 1000] (smallest F({}) = {:.6})",
            least.0, least.1
        ),
        least.1 > 1.0,
    );
    r
}

fn critical_efficiency() -> Report {
    let mut r = Report::new();
    let ph = photon();
    let closed = eta0_crit_min(&ph).unwrap();
    r.abs("closed form", closed, 0.7585, 0.001);
    let bisected: Vec<f64> = [0.1, 0.5, 1.0]
        .iter()
        .map(|&e12| eta0_crit_bisect(&ph, e12).unwrap())
        .collect();
    for (e12, b) in [0.1, 0.5, 1.0].iter().zip(&bisected) {
        r.abs(&format!("bisection at eta12 = {e12}"), *b, 0.7585, 0.001);
    }
    let spread = bisected
        .iter()
        .chain([closed].iter())
        .fold(0.0f64, |m, x| m.max((x - closed).abs()));
    r.check(
        format!("level set spread over eta12 {spread:.2e} <= 1e-6"),
        spread <= 1e-6,
    );
    r
}

fn oracle_equivalence() -> Report {
    let mut r = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (b0, b12) = (rng.random_range(0.2..5.0), rng.random_range(0.2..5.0));
        let m = rng.random_range(0.5..4.0);
        let k = rng.random_range(0.05..0.95) * b0 * b12;
        let g = GsnParams::from_determinant(b0, b12, k, m).unwrap();
        let exact = joint_pn_on(&g, 30, 30).unwrap();
        let oracle = mandel_transform(&g, 30, 30, 1e-9).unwrap();
        let mut d = 0.0f64;
        for n0 in 0..=30 {
            for n12 in 0..=30 {
                d = d.max((exact.prob(n0, n12) - oracle.prob(n0, n12)).abs());
            }
        }
        worst = worst.max(d);
        r.check(
            format!("B0 {b0:.3} B12 {b12:.3} K {k:.3} M {m:.3}: max |diff| {d:.2e}"),
            d <= 1e-6,
        );
    }
    r.check(
        format!("20 classical sets, worst {worst:.2e} <= 1e-6"),
        worst <= 1e-6,
    );
    r
}

fn sampler_round_trip() -> Report {
    let mut r = Report::new();
    let g = GsnParams::new(3.0, 4.0, 3.0, 5.0).unwrap();
    let eta = EfficiencyVector::uniform(0.6).unwrap();
    let n = 200_000u64;
    let cfg = SimConfig {
        params: g,
        eta,
        n_pulses: n,
        seed: 20,
        detection: Detection::Thinned,
        noise: None,
    };
    let pulses = sample_pulses(&cfg).unwrap();
    let photon_params = |s: &[(u64, u64)]| -> trimode::Result<Vec<f64>> {
        let m = to_photon_moments(&accumulate(s.iter().copied())?, &eta)?;
        let e = estimate_gsn(&to_intensity_moments(&m))?.params;
        Ok(vec![e.b0(), e.b12(), e.d012(), e.modes()])
    };
    let est = photon_params(&pulses).unwrap();
    let se = batch_standard_errors(&pulses, 20, photon_params).unwrap();
    for (i, (name, want)) in [("B0", 3.0), ("B12", 4.0), ("|D012|", 3.0), ("M", 5.0)]
        .into_iter()
        .enumerate()
    {
        let z = (est[i] - want) / se[i];
        r.check(
            format!("{name}: {:.4} vs {want} ({z:+.2} SE)", est[i]),
            z.abs() < 3.0,
        );
    }

    let detected = scale(&g, 0.6, 0.6).unwrap().scaled;
    let model = joint_pn(&detected, 1e-12).unwrap();
    let mut hist: HashMap<(u64, u64), u64> = HashMap::new();
    for p in &pulses {
        *hist.entry(*p).or_default() += 1;
    }
    let nf = n as f64;
    let (mut tv, mut floor) = (model.tail_mass_bound(), 0.0);
    for (n0, n12, lp, _) in model.cells() {
        let p = lp.exp();
        let emp = hist.remove(&(n0, n12)).unwrap_or(0) as f64 / nf;
        tv += (emp - p).abs();
        floor += (2.0 * p * (1.0 - p) / (std::f64::consts::PI * nf)).sqrt();
    }
    tv += hist.values().sum::<u64>() as f64 / nf;
    tv *= 0.5;
    floor *= 0.5;
    r.check(
        format!("histogram total variation {tv:.4} < 0.01 (sampling noise floor for {n} pulses {floor:.4})"),
        tv < 0.01,
    );
    r
}

fn structural_invariants() -> Report {
    let mut r = Report::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut mass, mut marg, mut identity, mut diag) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (b0, b12) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let m = rng.random_range(0.5..4.0);
        let lo = -f64::min(b0, b12);
        let k = lo + rng.random_range(0.02..0.98) * (b0 * b12 - lo);
        let g = GsnParams::from_determinant(b0, b12, k, m).unwrap();
        let j = joint_pn(&g, 1e-10).unwrap();
        let (mut s, mut a, mut b, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (n0, n12, lp, _) in j.cells() {
            let (x, y, p) = (n0 as f64, n12 as f64, lp.exp());
            s += p;
            a += p * x;
            b += p * y;
            aa += p * x * x;
            bb += p * y * y;
            ab += p * x * y;
        }
        mass = mass.max((s - 1.0).abs() - j.tail_mass_bound());
        for (axis, bb_) in [(Axis::Single, b0), (Axis::Compound, b12)] {
            for (n, p) in marginal(&j, axis).iter().enumerate() {
                marg = marg.max((p - log_mandel_rice(n as u64, bb_, m).exp()).abs());
            }
        }
        let diff_var = (aa - a * a) + (bb - b * b) - 2.0 * (ab - a * b);
        let wave = m * (b0 - b12).powi(2) + 2.0 * m * k;
        identity = identity.max((diff_var - a - b - wave).abs() / diff_var.max(1.0));

        let d = GsnParams::from_determinant(b0, b0, -b0, m).unwrap();
        let dj = joint_pn(&d, 1e-10).unwrap();
        for n in 0..=dj.n0_max().min(60) {
            let want = log_mandel_rice(n, b0, m).exp();
            diag = diag.max((dj.prob(n, n) - want).abs() / want.max(1e-300));
        }
    }
    r.check(
        format!("normalization excess over tail bound {mass:.2e} <= 1e-12"),
        mass <= 1e-12,
    );
    r.check(
        format!("Mandel-Rice marginals {marg:.2e} <= 1e-10"),
        marg <= 1e-10,
    );
    r.check(
        format!("difference-variance identity (relative) {identity:.2e} <= 1e-6"),
        identity <= 1e-6,
    );
    r.check(
        format!("diagonal limit (relative) {diag:.2e} <= 1e-12"),
        diag <= 1e-12,
    );

    let (mut det, mut sum) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let c = CouplingConfig::real(
            rng.random_range(0.1..1.5),
            rng.random_range(0.05..1.5),
            rng.random_range(0.05..2.0),
            1.0,
        )
        .unwrap();
        let (_, tri, _) = predict(&c).unwrap();
        let s = 1.0 + tri.b0 * tri.b0;
        det = det.max(
            tri.k12()
                .abs()
                .max((tri.k01() + tri.b1).abs())
                .max((tri.k02() + tri.b2).abs())
                / s,
        );
        sum = sum.max((tri.b0 - tri.b1 - tri.b2).abs() / (1.0 + tri.b0));
    }
    r.check(
        format!("dynamics determinants {det:.2e} <= 1e-9"),
        det <= 1e-9,
    );
    r.check(format!("B0 = B1 + B2 {sum:.2e} <= 1e-9"), sum <= 1e-9);
    r
}

fn quasi_signs() -> Report {
    let mut r = Report::new();
    for (name, g, s, negative) in [
        ("photoelectron", photoelectron(), 0.4, false),
        ("photoelectron", photoelectron(), 0.9, true),
        ("photon", photon(), 0.4, true),
    ] {
        let axes = QuasiAxes::auto(&OrderedParams::new(&g, s).unwrap(), 101).unwrap();
        let grid = quasi_grid(&g, s, &axes).unwrap();
        let count = grid.values.iter().filter(|v| **v < 0.0).count();
        r.check(
            format!(
                "{name} s = {s}: {count} negative cells, minimum {:.3e}",
                grid.min_value()
            ),
            grid.has_negative() == negative,
        );
    }
    r
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Report); 10] = [
        ("coefficient reproduction", coefficients),
        ("photon-level reproduction", photon_level),
        ("diagnostic scalars", diagnostic_scalars),
        ("ordering thresholds", ordering_thresholds),
        ("conditional nonclassicality boundary", conditional_boundary),
        ("critical efficiency", critical_efficiency),
        ("oracle equivalence", oracle_equivalence),
        ("sampler round trip", sampler_round_trip),
        ("structural invariants", structural_invariants),
        ("quasi-distribution signs", quasi_signs),
    ];
    let mut summary = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let report = run();
        println!(
            "[{}] {name} ({:.1} s)",
            i + 1,
            start.elapsed().as_secs_f64()
        );
        for (label, ok) in &report.checks {
            println!("    {} {label}", if *ok { "ok  " } else { "MISS" });
        }
        summary.push((i + 1, *name, report.passed()));
    }
    println!();
    for (i, name, ok) in &summary {
        println!("{} {i:>2} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed = summary.iter().filter(|s| !s.2).count();
    println!(
        "\n{} of {} criteria passed",
        summary.len() - failed,
        summary.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
