use proptest::prelude::*;

use trimode::distributions::{
    conditional, fano_closed, joint_pn, log_mandel_rice, marginal, Axis, JointPN,
};
use trimode::dynamics::{evolve, predict, CouplingConfig};
use trimode::efficiency::{eta0_crit_bisect, eta0_crit_min, scale};
use trimode::moments::{
    diagnostics, estimate_gsn, model_moments, to_intensity_moments, to_photon_moments,
    EfficiencyVector, MomentKind,
};
use trimode::numerics::{bessel_i_scaled, ln_gamma, signed_log_sum, SignedLogValue};
use trimode::quasiprob::{s_threshold, Branch, OrderedParams};
use trimode::GsnParams;

/// Valid parameters with `K012` drawn across its whole admissible range
/// `[−min(B0, B12), B0·B12]`.
fn params(max_b: f64, max_m: f64) -> impl Strategy<Value = GsnParams> {
    (0.2..max_b, 0.2..max_b, 0.02..0.98f64, 0.5..max_m).prop_map(|(b0, b12, u, m)| {
        let lo = -b0.min(b12);
        let hi = b0 * b12;
        GsnParams::from_determinant(b0, b12, lo + u * (hi - lo), m).unwrap()
    })
}

/// Nonclassical parameters, `K012 ∈ [−min(B0, B12), 0)`.
fn nonclassical(max_b: f64, max_m: f64) -> impl Strategy<Value = GsnParams> {
    (0.2..max_b, 0.2..max_b, 0.01..0.99f64, 0.5..max_m).prop_map(|(b0, b12, u, m)| {
        GsnParams::from_determinant(b0, b12, -u * b0.min(b12), m).unwrap()
    })
}

fn grid_moments(j: &JointPN) -> (f64, f64, f64, f64, f64, f64) {
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
    (s, a, b, aa - a * a, bb - b * b, ab - a * b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gamma_recurrence(x in 0.1..100.0f64) {
        let d = ln_gamma(x + 1.0) - ln_gamma(x) - x.ln();
        prop_assert!(d.abs() < 1e-12, "{}", d);
    }

    #[test]
    fn bessel_decreases_with_order(nu in 0.0..30.0f64, dnu in 0.0..10.0f64, x in 0.01..200.0f64) {
        let lo = bessel_i_scaled(nu, x).unwrap();
        let hi = bessel_i_scaled(nu + dnu, x).unwrap();
        prop_assert!(hi <= lo * (1.0 + 1e-12));
    }

    #[test]
    fn signed_sum_permutation_invariant(xs in prop::collection::vec(-50.0..50.0f64, 2..40), seed in any::<u64>()) {
        // well-conditioned mixtures only: positive bias keeps cancellation shallow
        let terms: Vec<SignedLogValue> = xs.iter().map(|&x| SignedLogValue::from_f64(x + 60.0)).collect();
        let mut shuffled = terms.clone();
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = signed_log_sum(&terms);
        let b = signed_log_sum(&shuffled);
        prop_assert!(!a.flagged);
        let (va, vb) = (a.value.to_f64(), b.value.to_f64());
        prop_assert!((va - vb).abs() <= 1e-12 * va.abs());
    }

    #[test]
    fn dynamics_identities(g0 in 0.1..1.5f64, g1 in 0.05..1.5f64, t in 0.05..2.0f64) {
        let cfg = CouplingConfig::real(g0, g1, t, 1.0).unwrap();
        let (_, tri, g) = predict(&cfg).unwrap();
        let scale = 1.0 + tri.b0 * tri.b0;
        prop_assert!(tri.k12().abs() < 1e-10 * scale);
        prop_assert!((tri.k01() + tri.b1).abs() < 1e-9 * scale);
        prop_assert!((tri.k02() + tri.b2).abs() < 1e-9 * scale);
        prop_assert!((tri.b0 - tri.b1 - tri.b2).abs() < 1e-9 * (1.0 + tri.b0));
        prop_assert!(g.k012() < 0.0);
    }

    #[test]
    fn evolution_is_a_semigroup(g0 in 0.1..1.2f64, g1 in 0.05..1.2f64, t1 in 0.0..1.5f64, t2 in 0.0..1.5f64) {
        let at = |t| evolve(&CouplingConfig::real(g0, g1, t, 1.0).unwrap());
        let joined = at(t1 + t2);
        let composed = at(t2).compose(&at(t1));
        let scale = joined.0.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let diff = (joined.0 - composed.0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-9 * scale, "{}", diff);
    }

    #[test]
    fn moment_round_trip(g in params(200.0, 40.0)) {
        let m = model_moments(&g, 1000, MomentKind::Photocount);
        let est = estimate_gsn(&to_intensity_moments(&m)).unwrap().params;
        for (x, y) in [(est.b0(), g.b0()), (est.b12(), g.b12()), (est.d012(), g.d012()), (est.modes(), g.modes())] {
            prop_assert!((x - y).abs() <= 1e-9 * y.max(1e-3), "{} vs {}", x, y);
        }
    }

    #[test]
    fn unit_efficiency_is_identity(g in params(50.0, 20.0)) {
        let m = model_moments(&g, 10, MomentKind::Photocount);
        let p = to_photon_moments(&m, &EfficiencyVector::uniform(1.0).unwrap()).unwrap();
        prop_assert_eq!((p.mean0, p.mean12, p.sq0, p.sq12, p.cross), (m.mean0, m.mean12, m.sq0, m.sq12, m.cross));
    }

    #[test]
    fn variance_identity_exact(g in params(200.0, 40.0)) {
        let m = model_moments(&g, 10, MomentKind::Photocount);
        let d = diagnostics(&m, &g);
        prop_assert_eq!(d.diff_var - m.mean0 - m.mean12 - d.wave_var_diff, 0.0);
    }

    #[test]
    fn determinant_sign_survives_detection(g in params(50.0, 10.0), e0 in 0.01..1.0f64, e12 in 0.01..1.0f64) {
        let s = scale(&g, e0, e12).unwrap().scaled;
        prop_assert_eq!(s.k012() < 0.0, g.k012() < 0.0);
        prop_assert_eq!(s.k012() > 0.0, g.k012() > 0.0);
    }

    #[test]
    fn ordering_branch_agrees_with_threshold(g in params(20.0, 5.0), s in -1.0..1.0f64) {
        let q = OrderedParams::new(&g, s).unwrap();
        prop_assume!(q.k012s.abs() > 10.0 * q.eps_k());
        let branch = q.branch().unwrap();
        match s_threshold(&g) {
            Ok(sth) => prop_assert_eq!(branch == Branch::Regular, s < sth),
            Err(_) => prop_assert_eq!(branch, Branch::Regular),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn critical_efficiency_closed_form_matches_bisection(g in nonclassical(100.0, 10.0)) {
        let closed = eta0_crit_min(&g).unwrap();
        prop_assume!(closed > 1e-3 && closed < 0.999);
        for eta12 in [0.1, 0.5, 1.0] {
            let b = eta0_crit_bisect(&g, eta12).unwrap();
            prop_assert!((b - closed).abs() < 1e-9, "{} vs {}", b, closed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn joint_grid_structure(g in params(3.0, 4.0)) {
        let j = joint_pn(&g, 1e-10).unwrap();
        let (mass, m0, m12, v0, v12, c) = grid_moments(&j);
        let m = g.modes();
        prop_assert!((mass - 1.0).abs() <= j.tail_mass_bound() + 1e-12, "mass {}", mass);
        prop_assert!((m0 - m * g.b0()).abs() < 1e-6 * m * g.b0());
        prop_assert!((m12 - m * g.b12()).abs() < 1e-6 * m * g.b12());
        // photon-number variance = intensity variance + shot noise
        prop_assert!((v0 - m0 - m * g.b0().powi(2)).abs() < 1e-6 * v0);
        prop_assert!((c - m * g.d012().powi(2)).abs() < 1e-6 * (v0 * v12).sqrt());
        let diff_var = v0 + v12 - 2.0 * c;
        let wave = m * (g.b0() - g.b12()).powi(2) + 2.0 * m * g.k012();
        prop_assert!((diff_var - m0 - m12 - wave).abs() < 1e-6 * diff_var.max(1.0));

        let single = marginal(&j, Axis::Single);
        for (n, p) in single.iter().enumerate() {
            let want = log_mandel_rice(n as u64, g.b0(), m).exp();
            prop_assert!((p - want).abs() < 1e-10, "n0 = {}: {} vs {}", n, p, want);
        }
        let compound = marginal(&j, Axis::Compound);
        for (n, p) in compound.iter().enumerate() {
            let want = log_mandel_rice(n as u64, g.b12(), m).exp();
            prop_assert!((p - want).abs() < 1e-10, "n12 = {}: {} vs {}", n, p, want);
        }
    }

    #[test]
    fn swapping_fields_transposes(g in params(2.5, 3.0)) {
        let a = joint_pn(&g, 1e-10).unwrap();
        let b = joint_pn(&g.swapped(), 1e-10).unwrap();
        for n0 in 0..=a.n0_max().min(b.n12_max()) {
            for n12 in 0..=a.n12_max().min(b.n0_max()) {
                let (x, y) = (a.prob(n0, n12), b.prob(n12, n0));
                // alternating sums for K > 0 lose a few nats, hence not 1e-15
                prop_assert!((x - y).abs() <= 1e-12 * x.max(y) + 1e-300);
            }
        }
    }

    #[test]
    fn diagonal_limit_is_mandel_rice(b in 0.2..8.0f64, m in 0.5..4.0f64) {
        let g = GsnParams::from_determinant(b, b, -b, m).unwrap();
        let j = joint_pn(&g, 1e-10).unwrap();
        for n in 0..=j.n0_max().min(60) {
            let want = log_mandel_rice(n, b, m).exp();
            prop_assert!((j.prob(n, n) - want).abs() <= 1e-12 * want.max(1e-300));
            if n > 0 {
                prop_assert_eq!(j.prob(n, n - 1), 0.0);
            }
        }
    }

    #[test]
    fn conditional_fano_matches_closed_form(g in params(40.0, 10.0)) {
        for n0 in [1u64, 10, 100, 1000] {
            let c = conditional(&g, n0, 1e-10).unwrap();
            let f = fano_closed(&g, n0).unwrap();
            prop_assert!((c.fano - f).abs() < 1e-6 * f.max(1e-3), "n0 = {}: {} vs {}", n0, c.fano, f);
        }
    }
}
