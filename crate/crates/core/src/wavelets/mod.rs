//! Periodized orthogonal Daubechies wavelet transforms in 1D and 2D.

mod filters;
mod transform;

pub use filters::{FilterBank, WaveletFamily};
pub use transform::{check_extents, dwt, dwt2, idwt, idwt2, WaveletCoeffs, WaveletOp, WaveletPlan};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("decomposition depth must be at least 1")]
    ZeroLevels,
    #[error("{levels} levels is too deep for extent {extent}")]
    TooDeep { extent: usize, levels: usize },
    #[error("extent {extent} is not divisible by 2^{levels}; pad to {padded}")]
    Indivisible {
        extent: usize,
        levels: usize,
        padded: usize,
    },
    #[error("only 1D and 2D transforms are supported, got rank {0}")]
    UnsupportedRank(usize),
    #[error("inconsistent coefficients: {0}")]
    Inconsistent(String),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::{finite_difference_gradient, Graph, ParamId, Tensor};

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn norm(a: &[f64]) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn haar_hand_example() {
        let c = dwt(&[1.0, 2.0, 3.0, 4.0], WaveletFamily::Db1, 1).unwrap();
        assert!(max_diff(&c.approx, &[2.121320, 4.949747]) < 1e-6);
        assert!(max_diff(&c.details[0][0], &[-0.707107, -0.707107]) < 1e-6);
    }

    #[test]
    fn constant_signal_has_zero_details() {
        for fam in WaveletFamily::ALL {
            let c = dwt(&[2.5; 32], fam, 3).unwrap();
            for d in c.details.iter().flatten().flatten() {
                assert!(d.abs() < 1e-12, "{fam}: {d}");
            }
            let c2 = dwt2(&[-1.5; 256], [16, 16], fam, 2).unwrap();
            for d in c2.details.iter().flatten().flatten() {
                assert!(d.abs() < 1e-12, "{fam} 2D: {d}");
            }
        }
    }

    #[test]
    fn perfect_reconstruction_all_families_and_levels() {
        for (fi, fam) in WaveletFamily::ALL.into_iter().enumerate() {
            for levels in 1..=4 {
                let x = random(64, (fi * 10 + levels) as u64);
                let c = dwt(&x, fam, levels).unwrap();
                assert_eq!(c.len(), 64);
                assert!((c.norm() - norm(&x)).abs() < 1e-10);
                assert!(max_diff(&idwt(&c, fam).unwrap(), &x) < 1e-10, "{fam} L{levels}");

                let f = random(32 * 48, (fi * 10 + levels + 100) as u64);
                let c = dwt2(&f, [32, 48], fam, levels).unwrap();
                assert!((c.norm() - norm(&f)).abs() < 1e-10);
                assert!(max_diff(&idwt2(&c, fam).unwrap(), &f) < 1e-10, "{fam} 2D L{levels}");
            }
        }
    }

    #[test]
    fn db6_three_level_round_trip() {
        let x = random(64, 7);
        let c = dwt(&x, WaveletFamily::Db6, 3).unwrap();
        assert!(max_diff(&idwt(&c, WaveletFamily::Db6).unwrap(), &x) < 1e-10);
    }

    #[test]
    fn sub_band_extents_halve_per_level() {
        let c = dwt2(&random(32 * 16, 3), [32, 16], WaveletFamily::Db4, 3).unwrap();
        assert_eq!(c.approx.len(), 4 * 2);
        for (l, bands) in c.details.iter().enumerate() {
            assert_eq!(bands.len(), 3);
            for b in bands {
                assert_eq!(b.len(), (32 >> (l + 1)) * (16 >> (l + 1)));
            }
        }
        let c1 = dwt(&random(32, 4), WaveletFamily::Db2, 2).unwrap();
        assert_eq!(c1.details[0][0].len(), 16);
        assert_eq!(c1.details[1][0].len(), 8);
        assert_eq!(c1.approx.len(), 8);
    }

    #[test]
    fn zero_coefficients_give_zero_signal() {
        let c = dwt(&[0.0; 16], WaveletFamily::Db3, 2).unwrap();
        assert!(idwt(&c, WaveletFamily::Db3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn approx_only_reconstruction_of_constant() {
        let mut c = dwt(&[4.0; 32], WaveletFamily::Db4, 2).unwrap();
        for d in c.details.iter_mut().flatten() {
            d.fill(0.0);
        }
        let back = idwt(&c, WaveletFamily::Db4).unwrap();
        assert!(max_diff(&back, &[4.0; 32]) < 1e-12);
    }

    #[test]
    fn separable_field_gives_outer_product_approx() {
        let f = random(16, 21);
        let g = random(8, 22);
        let field: Vec<f64> = f.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
        let c = dwt2(&field, [16, 8], WaveletFamily::Db1, 2).unwrap();
        let cf = dwt(&f, WaveletFamily::Db1, 2).unwrap();
        let cg = dwt(&g, WaveletFamily::Db1, 2).unwrap();
        let outer: Vec<f64> = cf
            .approx
            .iter()
            .flat_map(|a| cg.approx.iter().map(move |b| a * b))
            .collect();
        assert!(max_diff(&c.approx, &outer) < 1e-12);
    }

    #[test]
    fn circular_shift_moves_coarsest_approx_by_one() {
        let levels = 3;
        let x = random(64, 31);
        let s = 1 << levels;
        let shifted: Vec<f64> = (0..64).map(|i| x[(i + 64 - s) % 64]).collect();
        let a = dwt(&x, WaveletFamily::Db4, levels).unwrap().approx;
        let b = dwt(&shifted, WaveletFamily::Db4, levels).unwrap().approx;
        let n = a.len();
        let rolled: Vec<f64> = (0..n).map(|k| a[(k + n - 1) % n]).collect();
        assert!(max_diff(&b, &rolled) < 1e-12);
    }

    #[test]
    fn extent_errors() {
        assert_eq!(
            dwt(&[0.0; 4], WaveletFamily::Db1, 3).unwrap_err(),
            WaveletError::TooDeep { extent: 4, levels: 3 }
        );
        assert_eq!(
            dwt(&[0.0; 20], WaveletFamily::Db1, 3).unwrap_err(),
            WaveletError::Indivisible {
                extent: 20,
                levels: 3,
                padded: 24
            }
        );
        assert_eq!(dwt(&[0.0; 4], WaveletFamily::Db1, 0).unwrap_err(), WaveletError::ZeroLevels);
        assert!(matches!(
            dwt2(&[0.0; 65 * 64], [65, 64], WaveletFamily::Db4, 1),
            Err(WaveletError::Indivisible { padded: 66, .. })
        ));
    }

    #[test]
    fn inconsistent_coefficients_are_rejected() {
        let mut c = dwt(&random(16, 5), WaveletFamily::Db2, 2).unwrap();
        c.details[1][0].pop();
        assert!(matches!(idwt(&c, WaveletFamily::Db2), Err(WaveletError::Inconsistent(_))));
        let mut c = dwt(&random(16, 5), WaveletFamily::Db2, 2).unwrap();
        c.levels = 3;
        assert!(idwt(&c, WaveletFamily::Db2).is_err());
    }

    #[test]
    fn packed_layout_round_trips() {
        let x = random(16 * 32, 8);
        let c = dwt2(&x, [16, 32], WaveletFamily::Db3, 2).unwrap();
        let packed = c.to_packed().unwrap();
        let plan = WaveletPlan::new(WaveletFamily::Db3, 2, &[16, 32]).unwrap();
        let mut direct = vec![0.0; x.len()];
        plan.forward(&x, &mut direct).unwrap();
        assert_eq!(packed, direct);
        assert_eq!(WaveletCoeffs::from_packed(&packed, &[16, 32], 2).unwrap(), c);
    }

    #[test]
    fn last_level_region_covers_coarsest_block() {
        let plan = WaveletPlan::new(WaveletFamily::Db1, 2, &[8, 16]).unwrap();
        let r = plan.last_level_region();
        assert_eq!(plan.last_level_extents(), vec![4, 8]);
        assert_eq!(r.len(), 32);
        assert_eq!(r[8], 16);
        let plan = WaveletPlan::new(WaveletFamily::Db1, 3, &[64]).unwrap();
        assert_eq!(plan.last_level_region(), (0..16).collect::<Vec<_>>());
    }

    fn fd_check(extents: &[usize], inverse: bool) {
        let plan = WaveletPlan::new(WaveletFamily::Db4, 2, extents).unwrap();
        let mut shape = vec![2, 3];
        shape.extend_from_slice(extents);
        let n: usize = shape.iter().product();
        let x = Tensor::new(shape.clone(), random(n, 40)).unwrap();
        let w = Tensor::new(shape, random(n, 41)).unwrap();
        let op = Arc::new(WaveletOp { plan, inverse });
        let eval = |x: &Tensor| -> (Graph, crate::tensor::Var) {
            let mut g = Graph::new();
            let xv = g.param(ParamId(0), x.clone());
            let y = g.custom(op.clone(), &[xv]).unwrap();
            let wv = g.constant(w.clone());
            let p = g.mul(y, wv).unwrap();
            let l = g.sum(p).unwrap();
            (g, l)
        };
        let (mut g, l) = eval(&x);
        let grads = g.backward(l).unwrap();
        let fd = finite_difference_gradient(
            |t| {
                let (g, l) = eval(t);
                g.value(l).item().unwrap()
            },
            &x,
            1e-5,
        )
        .unwrap();
        let ad = grads.get(ParamId(0)).unwrap();
        assert!(max_diff(ad.data(), fd.data()) < 1e-7);
    }

    #[test]
    fn transform_gradients_match_finite_differences() {
        fd_check(&[16], false);
        fd_check(&[16], true);
        fd_check(&[8, 8], false);
        fd_check(&[8, 8], true);
    }

    proptest! {
        #[test]
        fn dwt_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let x = random(32, seed);
            let y = random(32, seed + 5000);
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let plan = WaveletPlan::new(WaveletFamily::Db4, 2, &[32]).unwrap();
            let (mut cx, mut cy, mut cz) = (vec![0.0; 32], vec![0.0; 32], vec![0.0; 32]);
            plan.forward(&x, &mut cx).unwrap();
            plan.forward(&y, &mut cy).unwrap();
            plan.forward(&z, &mut cz).unwrap();
            for i in 0..32 {
                prop_assert!((cz[i] - alpha * cx[i] - beta * cy[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trip_any_input(data in prop::collection::vec(-1e3f64..1e3, 64), fam in 0usize..6, levels in 1usize..=4) {
            let fam = WaveletFamily::ALL[fam];
            let plan = WaveletPlan::new(fam, levels, &[8, 8]).unwrap_or_else(|_| WaveletPlan::new(fam, 3, &[8, 8]).unwrap());
            let mut c = vec![0.0; 64];
            let mut back = vec![0.0; 64];
            plan.forward(&data, &mut c).unwrap();
            plan.inverse(&c, &mut back).unwrap();
            prop_assert!(max_diff(&back, &data) < 1e-9);
        }
    }
}
