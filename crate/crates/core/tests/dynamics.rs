use lattice_lab_core::dynamics::{
    cocycle_phi, diag_g1, energy_balance, integrate, solve_u, Forcing, IntegrateOptions, NuProfile, SystemParams,
};
use lattice_lab_core::noise::sample_noise;
use lattice_lab_core::LatticeVec;

fn scalar_params(alpha: f64) -> SystemParams {
    SystemParams {
        alpha,
        nu: NuProfile::Constant { value: 0.0 },
        ..SystemParams::default()
    }
}

#[test]
fn scalar_linear_decay_without_noise() {
    let path = sample_noise(1, -1.0, 6.0, 1e-3, 20.0).unwrap();
    let params = scalar_params(0.0);
    let u0 = LatticeVec::new(0, vec![2.0]).unwrap();
    let u = solve_u(5.0, 0.5, &path, &u0, &params, &Forcing::Zero).unwrap();
    let exact = 2.0 * (-params.lambda * 4.5f64).exp();
    assert!((u.get(0) - exact).abs() < 1e-6 * exact);
}

#[test]
fn scalar_linear_multiplicative_noise_is_geometric() {
    // Stratonovich solution u(t) = u(τ) exp(-λ(t-τ) + α(W(t) - W(τ))).
    let path = sample_noise(4, -1.0, 6.0, 1e-4, 20.0).unwrap();
    let u0 = LatticeVec::new(0, vec![1.0]).unwrap();
    for alpha in [-0.5, 0.5] {
        let params = scalar_params(alpha);
        let u = solve_u(4.0, 0.0, &path, &u0, &params, &Forcing::Zero).unwrap();
        let dw = path.w_at(4.0).unwrap() - path.w_at(0.0).unwrap();
        let exact = (-params.lambda * 4.0 + alpha * dw).exp();
        assert!((u.get(0) - exact).abs() < 1e-3 * exact, "α={alpha}: {} vs {exact}", u.get(0));
    }
}

#[test]
fn cocycle_composes() {
    let path = sample_noise(9, -6.0, 6.0, 1e-3, 20.0).unwrap();
    let params = SystemParams::default();
    let forcing = Forcing::default();
    let x = LatticeVec::from_fn(6, |i| (i as f64 * 0.7).sin()).unwrap();
    let (t, s, tau) = (1.5, 0.75, -2.0);
    let direct = cocycle_phi(t + s, tau, &path, &x, &params, &forcing).unwrap();
    let inner = cocycle_phi(s, tau, &path, &x, &params, &forcing).unwrap();
    let outer = cocycle_phi(t, tau + s, &path.theta_shift(s).unwrap(), &inner, &params, &forcing).unwrap();
    let err = direct.sub(&outer).l2_norm() / direct.l2_norm();
    assert!(err < 1e-12, "{err}");
    let same = cocycle_phi(0.0, tau, &path, &x, &params, &forcing).unwrap();
    assert_eq!(same, x);
}

#[test]
fn energy_inequality_and_g1_along_trajectories() {
    let params = SystemParams::default();
    let forcing = Forcing::default();
    for seed in 0..4u64 {
        let path = sample_noise(seed, -1.0, 5.0, 1e-3, 20.0).unwrap();
        for alpha in [-0.5, 0.0, 0.5] {
            let params = params.with_alpha(alpha);
            let u0 = LatticeVec::from_fn(8, |i| 2.0 / (1.0 + (i as f64 - seed as f64).powi(2))).unwrap();
            let z0 = path.z_at(0.0).unwrap();
            let v0 = u0.scale((-alpha * z0).exp());
            let traj = integrate(&v0, 0.0, 4.0, &path, &params, &forcing, IntegrateOptions::default()).unwrap();
            let rows = energy_balance(&traj);
            let scale = rows.iter().map(|r| r.rhs.abs().max(r.lhs.abs())).fold(0.0, f64::max);
            for r in &rows {
                assert!(r.rhs - r.lhs >= -2e-2 * scale, "seed {seed} α {alpha} t {}: {r:?}", r.t);
            }
            let g1 = diag_g1(alpha, 0.0, 4.0, &path, u0.l2_norm(), &params, &forcing, 8).unwrap();
            let worst = traj.v.iter().map(|v| v.l2_norm().powi(2)).fold(0.0, f64::max);
            assert!(worst <= g1 * (1.0 + 2e-2), "{worst} > {g1}");
        }
    }
}

#[test]
fn zero_forcing_norm_decays() {
    let path = sample_noise(2, -1.0, 3.0, 1e-3, 20.0).unwrap();
    let params = SystemParams::default().with_alpha(0.0);
    let v0 = LatticeVec::from_fn(5, |i| if i == 0 { 3.0 } else { 0.5 }).unwrap();
    let traj = integrate(&v0, 0.0, 2.0, &path, &params, &Forcing::Zero, IntegrateOptions::default()).unwrap();
    assert!(traj.u.windows(2).all(|w| w[1].l2_norm() < w[0].l2_norm()));
}

#[test]
fn recording_stride_keeps_endpoints() {
    let path = sample_noise(2, -1.0, 3.0, 1e-3, 20.0).unwrap();
    let params = SystemParams::default();
    let v0 = LatticeVec::zeros(3);
    let opts = IntegrateOptions {
        record_stride: 300,
        ..IntegrateOptions::default()
    };
    let traj = integrate(&v0, 0.0, 1.0, &path, &params, &Forcing::default(), opts).unwrap();
    assert_eq!(traj.len(), 5);
    assert!((traj.times[4] - 1.0).abs() < 1e-12);
}
