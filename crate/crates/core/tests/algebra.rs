use lattice_lab_core::lattice::{lp_norm, op_a, op_b, op_bstar, pairing, LatticeVec};
use proptest::prelude::*;

fn lattice(n: usize) -> impl Strategy<Value = LatticeVec> {
    prop::collection::vec(-3.0f64..3.0, 2 * n + 1).prop_map(move |v| LatticeVec::new(n, v).unwrap())
}

fn close_le(a: f64, b: f64) -> bool {
    a <= b + 1e-10 * b.abs().max(a.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn embedding_is_monotone_in_the_exponent(u in lattice(7), p in 1.0f64..5.0, dq in 0.0f64..5.0) {
        let q = p + dq;
        prop_assert!(close_le(lp_norm(&u, q).unwrap(), lp_norm(&u, p).unwrap()));
        prop_assert!(close_le(lp_norm(&u, f64::INFINITY).unwrap(), lp_norm(&u, q).unwrap()));
    }

    #[test]
    fn holder_type_bound(u in lattice(6), v in lattice(6), r in 0.0f64..4.0, q in 1.0f64..6.0) {
        let vr = LatticeVec::new(6, v.values().iter().map(|x| x.abs().powf(r)).collect()).unwrap();
        let lhs = pairing(&u, &vr);
        let sup = lp_norm(&v, f64::INFINITY).unwrap().powf(r);
        let mid = lp_norm(&u, 1.0).unwrap() * sup;
        let right = lp_norm(&u, 1.0).unwrap() * lp_norm(&v, q).unwrap().powf(r);
        prop_assert!(close_le(lhs, mid));
        prop_assert!(close_le(mid, right));
    }

    #[test]
    fn operator_bound_chain(u in lattice(6), p in 2.0f64..5.0) {
        // Bu on one extra site captures the left boundary difference.
        let bu = op_b(&u.embed(7).unwrap());
        let au = op_a(&u, p).unwrap();
        let a_sq = au.l2_norm().powi(2);
        let sum_b: f64 = bu.values().iter().map(|x| x.abs().powf(2.0 * p - 2.0)).sum();
        let lp = lp_norm(&u, 2.0 * p - 2.0).unwrap().powf(2.0 * p - 2.0);
        prop_assert!(close_le(a_sq, 4.0 * sum_b));
        prop_assert!(close_le(4.0 * sum_b, 4f64.powf(p) * lp));
        prop_assert!(close_le(lp, u.l2_norm().powf(2.0 * p - 2.0)));
    }

    #[test]
    fn pairing_with_a_is_nonnegative_and_bounded(u in lattice(6), p in 2.0f64..5.0) {
        let au = op_a(&u, p).unwrap();
        let bu = op_b(&u.embed(7).unwrap());
        let energy = pairing(&au, &u);
        let flux: f64 = bu.values().iter().map(|x| x.abs().powf(p)).sum();
        prop_assert!((energy - flux).abs() <= 1e-10 * flux.max(1e-300));
        prop_assert!(close_le(energy, 2f64.powf(p) * u.l2_norm().powf(p)));
    }

    #[test]
    fn adjoint_pair(u in lattice(9), v in lattice(9)) {
        let l = pairing(&op_b(&u), &v);
        let r = pairing(&u, &op_bstar(&v));
        prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn monotone_in_the_difference(u in lattice(6), v in lattice(6), p in 2.0f64..6.0) {
        let d = op_a(&u, p).unwrap().sub(&op_a(&v, p).unwrap());
        let s = pairing(&d, &u.sub(&v));
        let scale = d.l2_norm() * u.sub(&v).l2_norm();
        prop_assert!(s >= -1e-12 * scale.max(1e-300));
    }
}

#[test]
fn a_at_p2_is_the_second_difference() {
    let u = LatticeVec::new(3, vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5, 1.0]).unwrap();
    let au = op_a(&u, 2.0).unwrap();
    for i in -3..=3i64 {
        let expect = 2.0 * u.get(i) - u.get(i - 1) - u.get(i + 1);
        assert!((au.get(i) - expect).abs() < 1e-14);
    }
}
