//! Euclidean ambient spaces carrying a constant symmetric metallic structure.
//!
//! `J` is constant, hence parallel for the flat connection: every ambient
//! built here is locally metallic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalars::{power_identity_residual, MetallicParams};

/// Largest ambient dimension accepted.
pub const MAX_AMBIENT_DIM: usize = 64;

/// How the ambient matrix was built; this is what the report records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbientKind {
    /// `J = (p/2) I + lambda (sqrt(delta)/2) F` on `E^{2a+b}`.
    Product { a: usize, b: usize, lambda: i8 },
    /// `J = diag(sigma I_a, sigma_bar I_b)` on `E^{a+b}`.
    Split { a: usize, b: usize },
    /// Any other symmetric metallic matrix.
    Custom,
}

#[derive(Debug, Clone)]
pub struct AmbientStructure {
    dim: usize,
    j: DMatrix<f64>,
    params: MetallicParams,
    kind: AmbientKind,
}

impl AmbientStructure {
    /// Validates symmetry, the metallic identity and the spectrum of `j`.
    pub fn from_matrix(j: DMatrix<f64>, params: MetallicParams, kind: AmbientKind) -> Result<Self> {
        if !j.is_square() {
            return Err(Error::DimensionMismatch {
                expected: j.nrows(),
                found: j.ncols(),
            });
        }
        let dim = j.nrows();
        if dim == 0 || dim > MAX_AMBIENT_DIM {
            return Err(Error::Domain(format!(
                "ambient dimension {dim} outside 1..={MAX_AMBIENT_DIM}"
            )));
        }
        let asym = (&j - j.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::Domain(format!("J is not symmetric (defect {asym:e})")));
        }
        let identity = power_identity_residual(&j, &params, 2)?;
        let quad = (&j * &j - &j * params.pf() - DMatrix::identity(dim, dim) * params.qf()).amax();
        if quad > 1e-10 || identity > 1e-10 {
            return Err(Error::Domain(format!(
                "J does not satisfy J^2 = pJ + qI (residual {quad:e})"
            )));
        }
        let eig = SymmetricEigen::new(j.clone());
        for &ev in eig.eigenvalues.iter() {
            if (ev - params.sigma).abs() > 1e-8 && (ev - params.sigma_bar).abs() > 1e-8 {
                return Err(Error::Domain(format!("eigenvalue {ev} is not a metallic root")));
            }
        }
        Ok(Self { dim, j, params, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn params(&self) -> &MetallicParams {
        &self.params
    }

    pub fn kind(&self) -> AmbientKind {
        self.kind
    }

    /// `J v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(&self.j * v)
    }
}

/// `J_lambda = (p/2) I + lambda (sqrt(delta)/2) F` with `F = diag(I_a, -I_a, I_b)`.
pub fn make_product_structure(
    a: usize,
    b: usize,
    lambda: i8,
    params: MetallicParams,
) -> Result<AmbientStructure> {
    if a < 1 {
        return Err(Error::Domain("product structure needs a >= 1".into()));
    }
    if lambda != 1 && lambda != -1 {
        return Err(Error::Domain(format!("lambda must be +1 or -1, got {lambda}")));
    }
    let dim = 2 * a + b;
    let half_p = 0.5 * params.pf();
    let half_root = 0.5 * params.sqrt_delta() * f64::from(lambda);
    let diag = DVector::from_fn(dim, |i, _| {
        let f = if i >= a && i < 2 * a { -1.0 } else { 1.0 };
        if half_root * f > 0.0 {
            params.sigma
        } else if half_root * f < 0.0 {
            params.sigma_bar
        } else {
            half_p
        }
    });
    AmbientStructure::from_matrix(
        DMatrix::from_diagonal(&diag),
        params,
        AmbientKind::Product { a, b, lambda },
    )
}

/// `J = diag(sigma I_a, sigma_bar I_b)`.
pub fn make_split_structure(a: usize, b: usize, params: MetallicParams) -> Result<AmbientStructure> {
    if a < 1 || b < 1 {
        return Err(Error::Domain("split structure needs a, b >= 1".into()));
    }
    let diag = DVector::from_fn(a + b, |i, _| if i < a { params.sigma } else { params.sigma_bar });
    AmbientStructure::from_matrix(DMatrix::from_diagonal(&diag), params, AmbientKind::Split { a, b })
}

/// Nijenhuis tensor of a (1,1)-tensor field on `E^N` evaluated on two constant
/// vector fields, with brackets taken by central differences of the field.
///
/// For constant fields `X`, `Y` and `K = field`, `[KX, KY] = D_{KX}(K)Y - D_{KY}(K)X`,
/// `[KX, Y] = -D_Y(K)X`, `[X, KY] = D_X(K)Y` and `[X, Y] = 0`.
pub fn nijenhuis_of_field<F>(field: F, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let k = field(x);
    let deriv = |dir: &DVector<f64>| -> DMatrix<f64> {
        (field(&(x + dir * step)) - field(&(x - dir * step))) / (2.0 * step)
    };
    let ku = &k * u;
    let kv = &k * v;
    let bracket_ku_kv = deriv(&ku) * v - deriv(&kv) * u;
    let bracket_ku_v = -(deriv(v) * u);
    let bracket_u_kv = deriv(u) * v;
    bracket_ku_kv - &k * (bracket_ku_v + bracket_u_kv)
}

/// Ambient Nijenhuis tensor `N_J(X, Y)` for the constant structure of `amb`.
pub fn ambient_nijenhuis(amb: &AmbientStructure, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let j = amb.matrix().clone();
    nijenhuis_of_field(|_| j.clone(), x, u, v, 1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn product_structure_lambda_plus() {
        let g = MetallicParams::golden();
        let amb = make_product_structure(1, 0, 1, g).unwrap();
        assert_eq!(amb.dim(), 2);
        assert!((amb.matrix()[(0, 0)] - 1.618_033_988_749_895).abs() < 1e-15);
        assert!((amb.matrix()[(1, 1)] + 0.618_033_988_749_895).abs() < 1e-15);
    }

    #[test]
    fn product_structure_lambda_minus() {
        let g = MetallicParams::golden();
        let amb = make_product_structure(2, 1, -1, g).unwrap();
        let expect = [g.sigma_bar, g.sigma_bar, g.sigma, g.sigma, g.sigma_bar];
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(amb.matrix()[(i, i)], *e);
        }
        assert!(power_identity_residual(amb.matrix(), amb.params(), 2).unwrap() <= 1e-12);
    }

    #[test]
    fn product_structure_matches_defining_formula() {
        for (p, q) in [(1, 1), (2, 3), (5, 5)] {
            let m = MetallicParams::new(p, q).unwrap();
            for lambda in [-1i8, 1] {
                let amb = make_product_structure(2, 3, lambda, m).unwrap();
                for i in 0..7 {
                    let f = if (2..4).contains(&i) { -1.0 } else { 1.0 };
                    let formula = 0.5 * m.pf() + f64::from(lambda) * 0.5 * m.sqrt_delta() * f;
                    assert!((amb.matrix()[(i, i)] - formula).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn product_structure_domain_errors() {
        let g = MetallicParams::golden();
        assert!(make_product_structure(0, 2, 1, g).is_err());
        assert!(make_product_structure(1, 2, 0, g).is_err());
    }

    #[test]
    fn split_structure() {
        let g = MetallicParams::golden();
        let amb = make_split_structure(1, 1, g).unwrap();
        assert_eq!(amb.matrix()[(0, 0)], g.sigma);
        assert_eq!(amb.matrix()[(1, 1)], g.sigma_bar);

        let s = MetallicParams::new(2, 1).unwrap();
        let amb = make_split_structure(2, 3, s).unwrap();
        let d: Vec<f64> = amb.matrix().diagonal().iter().copied().collect();
        assert!((d[0] - 2.414_213_562_373_095).abs() < 1e-14);
        assert!((d[4] + 0.414_213_562_373_095).abs() < 1e-14);
        assert_eq!(amb.matrix(), &amb.matrix().transpose());
        assert!(make_split_structure(0, 1, s).is_err());
    }

    #[test]
    fn from_matrix_rejects_non_metallic() {
        let g = MetallicParams::golden();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(AmbientStructure::from_matrix(bad, g, AmbientKind::Custom).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[g.sigma, 0.1, 0.0, g.sigma_bar]);
        assert!(AmbientStructure::from_matrix(asym, g, AmbientKind::Custom).is_err());
        let big = DMatrix::<f64>::identity(65, 65) * g.sigma;
        assert!(AmbientStructure::from_matrix(big, g, AmbientKind::Custom).is_err());
    }

    #[test]
    fn rotated_structure_is_accepted() {
        // Q diag(sigma, sigma_bar) Q^T is metallic and symmetric for any rotation Q.
        let g = MetallicParams::golden();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![g.sigma, g.sigma_bar]));
        let j = &q * d * q.transpose();
        let j = (&j + j.transpose()) * 0.5;
        assert!(AmbientStructure::from_matrix(j, g, AmbientKind::Custom).is_ok());
    }

    #[test]
    fn apply_j() {
        let g = MetallicParams::golden();
        let amb = make_split_structure(1, 1, g).unwrap();
        let v = amb.apply(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(v.as_slice(), &[g.sigma, 0.0]);
        let z = amb.apply(&DVector::zeros(2)).unwrap();
        assert_eq!(z.amax(), 0.0);
        assert!(amb.apply(&DVector::zeros(3)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let amb = make_product_structure(2, 2, 1, MetallicParams::new(3, 2).unwrap()).unwrap();
        for _ in 0..20 {
            let v = random_vec(&mut rng, 6);
            let jv = amb.apply(&v).unwrap();
            let jjv = amb.apply(&jv).unwrap();
            let rhs = &jv * 3.0 + &v * 2.0;
            assert!((jjv - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn metric_compatibility() {
        let amb = make_product_structure(2, 1, -1, MetallicParams::new(2, 3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random_vec(&mut rng, 5);
            let y = random_vec(&mut rng, 5);
            let lhs = amb.apply(&x).unwrap().dot(&y);
            let rhs = x.dot(&amb.apply(&y).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_structure_is_integrable() {
        let amb = make_split_structure(2, 1, MetallicParams::golden()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_vec(&mut rng, 3);
            let u = random_vec(&mut rng, 3);
            let v = random_vec(&mut rng, 3);
            assert_eq!(ambient_nijenhuis(&amb, &x, &u, &v).amax(), 0.0);
        }
    }

    #[test]
    fn nijenhuis_of_varying_field() {
        // K(x) = [[0, x1], [x0, 0]]: [K e0, K e1] = (x0, -x1) and the other brackets vanish.
        let field = |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, x[1], x[0], 0.0]);
        let x = DVector::from_vec(vec![0.4, 0.7]);
        let e0 = DVector::from_vec(vec![1.0, 0.0]);
        let e1 = DVector::from_vec(vec![0.0, 1.0]);
        let n = nijenhuis_of_field(field, &x, &e0, &e1, 1e-4);
        assert!((n[0] - 0.4).abs() < 1e-12 && (n[1] + 0.7).abs() < 1e-12);
    }
}
