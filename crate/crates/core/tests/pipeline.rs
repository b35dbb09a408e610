use lattice_lab_core::attractor::{
    absorption_scan, ball_samples, hausdorff, pullback_cloud, usc_table, AttractorCloud, CloudSpec, NormTag,
};
use lattice_lab_core::liouville::{default_test_function, liouville_terms, LiouvilleSpec};
use lattice_lab_core::measures::{at_time, integrate_fn, invariance_residuals, push_forward, EnsembleMeasure};
use lattice_lab_core::noise::sample_noise;
use lattice_lab_core::testfn::TestFunctionDict;
use lattice_lab_core::{par, Error, Forcing, NoisePath, SystemParams};

fn small_spec() -> CloudSpec {
    CloudSpec {
        tau: 0.0,
        pullback_time: 8.0,
        m: 12,
        half_width: 8,
        horizon: 30.0,
    }
}

fn path(seed: u64) -> NoisePath {
    sample_noise(seed, -40.0, 3.0, 1e-2, 20.0).unwrap()
}

#[test]
fn cloud_lands_in_absorbing_ball_and_round_trips() {
    let dir = std::env::temp_dir().join(format!("lattice-lab-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let p = path(3);
    for alpha in [-0.4, 0.0, 0.4] {
        let c = pullback_cloud(alpha, &small_spec(), &p, &params, &forcing).unwrap();
        assert_eq!(c.points.len(), 12);
        assert!(c.within_absorbing());
        let file = dir.join(format!("cloud{alpha}.bin"));
        c.save(&file).unwrap();
        assert_eq!(AttractorCloud::load(&file).unwrap(), c);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usc_table_refuses_mismatched_noise() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let a = pullback_cloud(0.0, &small_spec(), &path(1), &params, &forcing).unwrap();
    let b = pullback_cloud(0.1, &small_spec(), &path(2), &params, &forcing).unwrap();
    assert!(matches!(usc_table(&a, &[b]), Err(Error::PathMismatch { .. })));
    let rows = usc_table(&a, &[a.clone()]).unwrap();
    assert_eq!(rows[0].dist_sum, 0.0);
}

#[test]
fn sequential_and_parallel_clouds_agree_bitwise() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let p = path(5);
    par::set_mode(par::Mode::Sequential);
    let a = pullback_cloud(0.3, &small_spec(), &p, &params, &forcing).unwrap();
    par::set_mode(par::Mode::Parallel);
    let b = pullback_cloud(0.3, &small_spec(), &p, &params, &forcing).unwrap();
    assert_eq!(a, b);
    assert_eq!(hausdorff(&a.points, &b.points, NormTag::L2CapLq(4.0)).unwrap(), 0.0);
}

#[test]
fn large_initial_balls_are_absorbed() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let spec = small_spec();
    let p = path(7);
    let times = [2.0, 4.0, 8.0, 16.0, 24.0];
    let report = absorption_scan(0.5, &spec, &p, &params, &forcing, &times, |_| {
        ball_samples(6, spec.half_width, 6.0)
    })
    .unwrap();
    assert!(report.entry_time.is_some(), "{report:?}");
    assert!(report.rows.last().unwrap().1 <= report.radius_sq);
}

#[test]
fn push_forward_family_is_exactly_invariant() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let p = path(11);
    let spec = LiouvilleSpec {
        t: 0.4,
        spacing: 0.1,
        window: 6.0,
        ds: 0.2,
        half_width: 8,
        ..LiouvilleSpec::default()
    };
    let family = spec.family(0.3, &p, &params, &forcing).unwrap();
    assert_eq!(family.len(), 5);
    for mu in &family {
        assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let base = spec.base(&p).unwrap();
    let pushed = push_forward(at_time(&family, 0.0).unwrap(), 0.2, &base, &params, &forcing).unwrap();
    let later = at_time(&family, 0.2).unwrap();
    // Equal up to the rounding of the v <-> u rescale.
    for (a, b) in pushed.particles.iter().zip(&later.particles) {
        assert!(a.sub(b).l2_norm() <= 1e-13 * b.l2_norm().max(1e-300));
    }

    let dict = TestFunctionDict::standard(8, 4.0, 4).unwrap();
    let res = invariance_residuals(&family, 0.1, 0.2, &dict.functions, &base, &params, &forcing).unwrap();
    assert!(res.iter().all(|r| *r < 1e-13), "{res:?}");
}

#[test]
fn liouville_report_recombines() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let p = path(13);
    let spec = LiouvilleSpec {
        t: 0.5,
        spacing: 0.05,
        window: 6.0,
        ds: 0.2,
        half_width: 8,
        ..LiouvilleSpec::default()
    };
    let radius = 4.0;
    let psi = default_test_function(&forcing, 8, radius).unwrap();
    for alpha in [0.0, 0.4] {
        let family = spec.family(alpha, &p, &params, &forcing).unwrap();
        let base = spec.base(&p).unwrap();
        let r = liouville_terms(&family, &psi, spec.s, spec.t, &base, &params, &forcing).unwrap();
        let ito = r.lhs_diff - r.drift_term - alpha * r.stoch_term_ito - 0.5 * alpha * alpha * r.correction_term;
        let strat = r.lhs_diff - r.drift_term - alpha * r.stoch_term_strat;
        assert!((r.residual_ito - ito).abs() <= 1e-12 * r.scale.max(1.0));
        assert!((r.residual_strat - strat).abs() <= 1e-12 * r.scale.max(1.0));
        assert!((r.lhs_diff - (r.lhs_t - r.lhs_s)).abs() <= 1e-14);
        assert!(r.residual_strat.abs() < 5e-2 * r.scale, "{r:?}");
        if alpha == 0.0 {
            assert_eq!(r.residual_ito, r.residual_strat);
        }
        let mu_t = at_time(&family, 0.5).unwrap();
        assert_eq!(r.lhs_t, integrate_fn(mu_t, &psi));
    }
}

#[test]
fn measures_round_trip_with_weights() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let p = path(17);
    let spec = LiouvilleSpec {
        t: 0.0,
        window: 4.0,
        half_width: 6,
        ..LiouvilleSpec::default()
    };
    let mu = spec.family(0.2, &p, &params, &forcing).unwrap().remove(0);
    let dir = std::env::temp_dir().join(format!("lattice-lab-measure-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("mu.bin");
    mu.save(&file).unwrap();
    assert_eq!(EnsembleMeasure::load(&file).unwrap(), mu);
    std::fs::remove_dir_all(&dir).unwrap();
}
