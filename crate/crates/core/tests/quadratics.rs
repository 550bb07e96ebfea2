use modalpath::quadratics::repair_spd;
use modalpath::{Block, JointQuadratic};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spd(n: usize, entries: &[f64], floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(n, n, &entries[..n * n]);
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

prop_compose! {
    fn joint()(da in 1usize..3, db in 1usize..3, e in prop::collection::vec(-2.0f64..2.0, 16 + 4 + 4 + 4), value in -5.0f64..5.0)
        -> JointQuadratic
    {
        let d = da + db;
        let full = spd(d, &e[..16], 0.2);
        let ma = DVector::from_column_slice(&e[16..16 + da]);
        let mb = DVector::from_column_slice(&e[20..20 + db]);
        JointQuadratic::from_full(value, ma, mb, &full).unwrap()
    }
}

proptest! {
    #[test]
    fn partial_maximum_is_the_profile(q in joint(), probe in prop::collection::vec(-3.0f64..3.0, 8)) {
        let (marg, cond) = q.partial_maximize(Block::A).unwrap();
        let xb = DVector::from_column_slice(&probe[..q.dim_b()]);
        let xa = cond.apply(&xb).unwrap();
        let profile = q.evaluate(&xa, &xb).unwrap();
        prop_assert!((marg.evaluate(&xb).unwrap() - profile).abs() <= 1e-9 * profile.abs().max(1.0));
        // the affine maximizer beats nearby points
        for k in 0..q.dim_a() {
            for s in [-1e-3, 1e-3, 0.1] {
                let mut moved = xa.clone();
                moved[k] += s;
                prop_assert!(q.evaluate(&moved, &xb).unwrap() <= profile + 1e-12);
            }
        }
    }

    #[test]
    fn eliminating_either_block_keeps_the_peak(q in joint()) {
        for block in [Block::A, Block::B] {
            let (marg, _) = q.partial_maximize(block).unwrap();
            prop_assert!((marg.evaluate(marg.mode()).unwrap() - q.value_at_mode()).abs() <= 1e-12);
            let kept = if block == Block::A { q.mode_b() } else { q.mode_a() };
            prop_assert!((marg.mode() - kept).amax() <= 1e-12);
        }
    }

    #[test]
    fn repair_leaves_well_conditioned_matrices_alone(e in prop::collection::vec(-2.0f64..2.0, 9)) {
        let m = spd(3, &e, 0.1);
        let r = repair_spd(&m).unwrap();
        prop_assert!(!r.clamped);
        prop_assert_eq!(r.matrix, m);
    }

    #[test]
    fn repair_output_is_positive_definite(e in prop::collection::vec(-2.0f64..2.0, 9)) {
        let m = DMatrix::from_column_slice(3, 3, &e);
        let r = repair_spd(&m).unwrap();
        prop_assert!(r.matrix.clone().symmetric_eigenvalues().min() >= 1e-8 * (1.0 - 1e-6));
    }
}
