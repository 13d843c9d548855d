use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use metallic::ambient::{make_product_structure, make_split_structure, AmbientStructure};
use metallic::chart::LinearChart;
use metallic::immersion::{Immersion, ParamBox, PointFrame};
use metallic::scalars::{gen_fibonacci, make_params, power_identity_residual};
use metallic::sigma::{classify_pointwise, decompose, rotate_normals, structure_identity_residuals};
use metallic::slant::slant_angle;

fn matrix(rows: usize, cols: usize, seed: Vec<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| seed[(i * cols + j) % seed.len()] + (i as f64 - j as f64) * 0.37)
}

fn orthogonal(k: usize, seed: Vec<f64>) -> DMatrix<f64> {
    matrix(k, k, seed).qr().q()
}

fn ambient(a: usize, b: usize, split: bool, lambda: i8, p: i64, q: i64) -> AmbientStructure {
    let params = make_params(p, q).unwrap();
    if split {
        make_split_structure(a + b, a, params).unwrap()
    } else {
        make_product_structure(a, b, lambda, params).unwrap()
    }
}

fn frame(dim: usize, n: usize, seed: Vec<f64>) -> PointFrame {
    let basis = matrix(dim, n, seed) + DMatrix::identity(dim, n) * 3.0;
    let imm = Immersion::new(Arc::new(LinearChart::new(basis)), ParamBox::cube(n, -1.0, 1.0)).unwrap();
    imm.frame_at(&DVector::zeros(n)).unwrap()
}

fn seed_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 7..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_relations(p in 1i64..40, q in 1i64..40) {
        let m = make_params(p, q).unwrap();
        let (pf, qf) = (p as f64, q as f64);
        prop_assert!((m.sigma + m.sigma_bar - pf).abs() <= 1e-12 * pf.max(1.0));
        prop_assert!((m.sigma * m.sigma_bar + qf).abs() <= 1e-12 * qf.max(1.0) * pf.max(1.0));
        prop_assert!((m.sigma * m.sigma - pf * m.sigma - qf).abs() <= 1e-12 * m.sigma * m.sigma);
        let f = gen_fibonacci(&m, 12);
        for k in 2..f.len() {
            prop_assert_eq!(f[k], pf * f[k - 1] + qf * f[k - 2]);
        }
    }

    #[test]
    fn ambient_structures_are_metallic_and_symmetric(
        a in 1usize..4, b in 1usize..4, split in any::<bool>(), neg in any::<bool>(), p in 1i64..6, q in 1i64..6,
    ) {
        let amb = ambient(a, b, split, if neg { -1 } else { 1 }, p, q);
        let j = amb.matrix();
        prop_assert!((j - j.transpose()).amax() == 0.0);
        for n in 1..=12 {
            prop_assert!(power_identity_residual(j, amb.params(), n).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn structure_identities_on_random_frames(
        a in 1usize..4, b in 1usize..4, split in any::<bool>(), p in 1i64..6, q in 1i64..6,
        n_frac in 0.0f64..1.0, seed in seed_vec(),
    ) {
        let amb = ambient(a, b, split, 1, p, q);
        let dim = amb.dim();
        prop_assume!(dim >= 2);
        let n = 1 + ((dim - 1) as f64 * n_frac) as usize % (dim - 1);
        let fr = frame(dim, n, seed);
        let sigma = decompose(&amb, &fr).unwrap();
        for r in structure_identity_residuals(&sigma, amb.params()) {
            prop_assert!(r <= 1e-9, "residual {r}");
        }
    }

    #[test]
    fn frame_rotations_act_by_conjugation(
        a in 1usize..4, b in 1usize..4, p in 1i64..6, q in 1i64..6, seed in seed_vec(), rot in seed_vec(),
    ) {
        let amb = ambient(a, b, false, 1, p, q);
        let dim = amb.dim();
        prop_assume!(dim >= 3);
        let n = dim / 2;
        let r = dim - n;
        let fr = frame(dim, n, seed.clone());
        let qt = orthogonal(n, rot.clone());
        let qn = orthogonal(r, rot.iter().map(|v| v * 0.5 - 0.1).collect());
        let mut turned = fr.clone();
        turned.e = &fr.e * &qt;
        let turned = turned.with_normals(&fr.f * &qn).unwrap();
        let s0 = decompose(&amb, &fr).unwrap();
        let s1 = decompose(&amb, &turned).unwrap();
        prop_assert!((qt.transpose() * &s0.t * &qt - &s1.t).amax() <= 1e-12);
        let expect = rotate_normals(&s0, &qn);
        prop_assert!((&expect.a - &s1.a).amax() <= 1e-12);
        prop_assert!((&expect.eta * &qt - &s1.eta).amax() <= 1e-12);
        prop_assert!((qt.transpose() * &expect.xi - &s1.xi).amax() <= 1e-12);
        prop_assert_eq!(classify_pointwise(&s0, 1e-7), classify_pointwise(&s1, 1e-7));
        let x = DVector::from_fn(n, |i, _| seed[i % seed.len()] + 0.5);
        prop_assume!(x.norm() > 1e-3);
        let before = slant_angle(&s0, &x).unwrap();
        let after = slant_angle(&s1, &(qt.transpose() * &x)).unwrap();
        prop_assert!((before - after).abs() <= 1e-10);
    }

    #[test]
    fn slant_angle_ignores_scale(
        a in 1usize..4, b in 1usize..4, split in any::<bool>(), seed in seed_vec(), scale in 1e-6f64..1e6, neg in any::<bool>(),
    ) {
        let amb = ambient(a, b, split, 1, 2, 1);
        let dim = amb.dim();
        prop_assume!(dim >= 2);
        let n = dim.div_ceil(2);
        let fr = frame(dim, n, seed.clone());
        let sigma = decompose(&amb, &fr).unwrap();
        let x = DVector::from_fn(n, |i, _| seed[(i + 3) % seed.len()] + 0.25);
        prop_assume!(x.norm() > 1e-3);
        let c = if neg { -scale } else { scale };
        let theta = slant_angle(&sigma, &x).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&theta));
        prop_assert!((theta - slant_angle(&sigma, &(&x * c)).unwrap()).abs() <= 1e-12);
    }
}
