use trimode::distributions::{
    conditional, difference_distribution, fano_closed, joint_pn_on, joint_pn_with, JointOptions,
};
use trimode::GsnParams;

fn photoelectron() -> GsnParams {
    GsnParams::new(87.765104, 92.861384, 90.371968, 13.3665).unwrap()
}

fn photon() -> GsnParams {
    GsnParams::new(313.447, 331.648, 322.757, 13.3665).unwrap()
}

#[test]
fn photocount_peak_follows_mean_ratio_ridge() {
    let g = photoelectron();
    // The box contains the global mode well inside its edges.
    let j = joint_pn_on(&g, 1200, 1260).unwrap();
    let (a0, a12) = j.argmax();
    assert!(a0 > 900 && a0 < 1150 && a12 < 1230, "{a0} {a12}");
    let ridge = g.b12() / g.b0() * a0 as f64;
    assert!(
        (a12 as f64 - ridge).abs() <= 2.0,
        "argmax ({a0}, {a12}), ridge {ridge}"
    );
}

#[test]
fn exact_conditional_fano_matches_closed_form() {
    let g = photon();
    for n0 in [1u64, 2, 5, 6, 50, 400, 1000] {
        let c = conditional(&g, n0, 1e-10).unwrap();
        let f = fano_closed(&g, n0).unwrap();
        assert!((c.fano - f).abs() < 1e-6 * f, "{n0}: {} vs {f}", c.fano);
    }
}

#[test]
fn photoelectron_conditional_stays_super_poissonian() {
    let g = photoelectron();
    for n0 in (1..=1000u64).step_by(37) {
        assert!(conditional(&g, n0, 1e-10).unwrap().fano > 1.0);
    }
}

#[test]
#[ignore = "builds a 1.7e4-row photon grid; about 100 s on one core"]
fn photon_difference_reduction_factor() {
    let g = photon();
    let j = joint_pn_with(
        &g,
        &JointOptions {
            cell_budget: 1_000_000,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((j.total_mass() - 1.0).abs() < 1e-8);
    let d = difference_distribution(&j);
    assert!((d.r_from_dist - 0.837).abs() < 0.005, "{}", d.r_from_dist);
}
