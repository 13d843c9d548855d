//! The structure induced by `J` on a submanifold, in frame coordinates.
//!
//! With `E` the tangent frame and `F = [N_1 .. N_r]` the normal frame,
//! `JX = TX + sum_a eta_a(X) N_a` and `J N_a = xi_a + sum_b a_ab N_b`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::AmbientStructure;
use crate::chart::{jacobian_or_fd, ChartMap};
use crate::error::{Error, Result};
use crate::immersion::{Immersion, PointFrame, PIVOT_THRESHOLD};
use crate::linalg::{max_abs, orthogonalize_against, thin_qr};
use crate::report::Checks;
use crate::scalars::MetallicParams;

/// Seed of the vector pairs used by the quadratic identity.
pub const PAIR_SEED: u64 = 0x5eed_0035;
/// Number of vector pairs used by the quadratic identity.
pub const PAIR_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStructure {
    /// `n x n`, `E^T J E`.
    pub t: DMatrix<f64>,
    /// `r x n`, row `a` is `eta_a` on the tangent frame.
    pub eta: DMatrix<f64>,
    /// `n x r`, column `a` is `xi_a` in tangent coordinates.
    pub xi: DMatrix<f64>,
    /// `r x r`, `a_ab = <J N_a, N_b>`.
    pub a: DMatrix<f64>,
    /// `r x r`, the normal part of `J` on the normal frame.
    pub nmap: DMatrix<f64>,
    /// `r x n`, `F^T J E`.
    pub nmat: DMatrix<f64>,
}

impl SigmaStructure {
    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn r(&self) -> usize {
        self.a.nrows()
    }

    /// `sum_a eta_a (x) xi_a` as an `n x n` matrix: `X -> sum_a eta_a(X) xi_a`.
    pub fn eta_xi(&self) -> DMatrix<f64> {
        &self.xi * &self.eta
    }
}

/// Splits `J` along the frame.
pub fn decompose(amb: &AmbientStructure, frame: &PointFrame) -> Result<SigmaStructure> {
    if frame.ambient_dim() != amb.dim() {
        return Err(Error::DimensionMismatch {
            expected: amb.dim(),
            found: frame.ambient_dim(),
        });
    }
    frame.check()?;
    let j = amb.matrix();
    let je = j * &frame.e;
    let jf = j * &frame.f;
    let t = frame.e.transpose() * &je;
    let nmat = frame.f.transpose() * &je;
    let xi = frame.e.transpose() * &jf;
    let a = frame.f.transpose() * &jf;
    Ok(SigmaStructure {
        eta: nmat.clone(),
        nmap: a.clone(),
        t,
        xi,
        a,
        nmat,
    })
}

/// Unit vectors in `R^n` for the quadratic identity.
pub fn seeded_pairs(n: usize, count: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 0.0 {
            v / norm
        } else {
            DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
        }
    };
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

/// Residuals of the eight algebraic identities of the induced structure.
pub fn structure_identity_residuals(sigma: &SigmaStructure, params: &MetallicParams) -> [f64; 8] {
    let (p, q) = (params.pf(), params.qf());
    let n = sigma.n();
    let r = sigma.r();
    let t = &sigma.t;
    let id_n = DMatrix::<f64>::identity(n, n);
    let id_r = DMatrix::<f64>::identity(r, r);
    let r1 = t * t - t * p - &id_n * q + sigma.eta_xi();
    let r2 = &sigma.eta * t - &sigma.eta * p + &sigma.a * &sigma.eta;
    let r3 = &sigma.a - sigma.a.transpose();
    let r4 = (&sigma.eta * &sigma.xi).transpose() - &id_r * q - &sigma.a * p + &sigma.a * &sigma.a;
    let r5 = t * &sigma.xi - &sigma.xi * p + &sigma.xi * sigma.a.transpose();
    let r6 = &sigma.eta - sigma.xi.transpose();
    let r7 = t - t.transpose();
    let mut r8: f64 = 0.0;
    for (x, y) in seeded_pairs(n, PAIR_COUNT, PAIR_SEED) {
        let tx = t * &x;
        let ty = t * &y;
        let eta_sum = (&sigma.eta * &x).dot(&(&sigma.eta * &y));
        let lhs = tx.dot(&ty);
        let rhs = p * x.dot(&ty) + q * x.dot(&y) - eta_sum;
        r8 = r8.max((lhs - rhs).abs());
    }
    [
        max_abs(&r1),
        max_abs(&r2),
        max_abs(&r3),
        max_abs(&r4),
        max_abs(&r5),
        max_abs(&r6),
        max_abs(&r7),
        r8,
    ]
}

pub const STRUCTURE_IDENTITY_NAMES: [&str; 8] = [
    "sigma.t_squared",
    "sigma.eta_t",
    "sigma.a_symmetric",
    "sigma.eta_xi",
    "sigma.t_xi",
    "sigma.eta_is_xi_dual",
    "sigma.t_symmetric",
    "sigma.t_quadratic",
];

/// All eight identities as checks against `tol`.
pub fn verify_structure_identities(sigma: &SigmaStructure, params: &MetallicParams, tol: f64) -> Checks {
    let mut out = Checks::new();
    for (name, res) in STRUCTURE_IDENTITY_NAMES.iter().zip(structure_identity_residuals(sigma, params)) {
        out.record(name, res, tol, None);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    Invariant,
    AntiInvariant,
    Mixed,
}

/// Invariant when every `eta_a` vanishes, anti-invariant when `T` does.
pub fn classify_pointwise(sigma: &SigmaStructure, tol: f64) -> PointClass {
    if sigma.r() == 0 || max_abs(&sigma.nmat) <= tol {
        PointClass::Invariant
    } else if max_abs(&sigma.t) <= tol {
        PointClass::AntiInvariant
    } else {
        PointClass::Mixed
    }
}

/// Re-expresses the structure after replacing `F` by `F Q`.
pub fn rotate_normals(sigma: &SigmaStructure, q: &DMatrix<f64>) -> SigmaStructure {
    SigmaStructure {
        t: sigma.t.clone(),
        eta: q.transpose() * &sigma.eta,
        xi: &sigma.xi * q,
        a: q.transpose() * &sigma.a * q,
        nmap: q.transpose() * &sigma.nmap * q,
        nmat: q.transpose() * &sigma.nmat,
    }
}

/// `M -> Mbar -> E^N`: `inner` maps chart points of `M` to chart points of
/// `outer`, and `composed` is `outer` after `inner`.
#[derive(Clone, Debug)]
pub struct Chain {
    pub outer: Immersion,
    pub inner: Arc<dyn ChartMap>,
    pub composed: Immersion,
}

/// Structure on `M` with the combined normal frame `[N_1 .. N_r, Nbar_1 .. Nbar_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint {
    pub direct: SigmaStructure,
    pub chained: SigmaStructure,
    pub outer: SigmaStructure,
    /// Largest difference between the tangent projectors of the composed chart
    /// and of the chained frame.
    pub tangent_mismatch: f64,
}

/// Evaluates both routes at chart point `v` of `M`.
///
/// The normals `N_a` of `M` inside `Mbar` are built in the orthonormal frame
/// coordinates of `Mbar` with the same pivot rule as ambient normals.
pub fn chain_point(amb: &AmbientStructure, chain: &Chain, v: &DVector<f64>) -> Result<ChainPoint> {
    let u = chain.inner.eval(v);
    if !chain.outer.domain().contains(&u) {
        return Err(Error::Domain("inner point leaves the outer chart domain".into()));
    }
    let outer_frame = chain.outer.frame_at(&u)?;
    let outer_sigma = decompose(amb, &outer_frame)?;
    let n_bar = outer_frame.n();
    let inner_jac = jacobian_or_fd(chain.inner.as_ref(), v);
    let n = inner_jac.ncols();
    if n > n_bar {
        return Err(Error::Frame("inner dimension exceeds outer dimension".into()));
    }
    // Tangent vectors of M in the orthonormal coordinates of Mbar.
    let tangent_coords = &outer_frame.r_factor * &inner_jac;
    let (e_in, _) = thin_qr(&tangent_coords).ok_or_else(|| Error::Frame("inner chart is degenerate".into()))?;
    let r = n_bar - n;
    let mut basis: Vec<DVector<f64>> = e_in.column_iter().map(|c| c.clone_owned()).collect();
    let mut normals = Vec::with_capacity(r);
    for axis in 0..n_bar {
        if normals.len() == r {
            break;
        }
        let mut w = DVector::zeros(n_bar);
        w[axis] = 1.0;
        orthogonalize_against(&mut w, &basis);
        let res = w.norm();
        if res < PIVOT_THRESHOLD {
            continue;
        }
        w /= res;
        basis.push(w.clone());
        normals.push(w);
    }
    if normals.len() != r {
        return Err(Error::Frame("could not complete the inner normal frame".into()));
    }
    let f_in = if r == 0 { DMatrix::zeros(n_bar, 0) } else { DMatrix::from_columns(&normals) };

    let tb = &outer_sigma.t;
    let t = e_in.transpose() * tb * &e_in;
    let eta_inner = f_in.transpose() * tb * &e_in;
    let eta_outer = &outer_sigma.eta * &e_in;
    let xi_inner = e_in.transpose() * tb * &f_in;
    let xi_outer = e_in.transpose() * &outer_sigma.xi;
    let a_inner = f_in.transpose() * tb * &f_in;
    let cross = &outer_sigma.eta * &f_in;
    let s = outer_frame.r();
    let total = r + s;

    let mut eta = DMatrix::zeros(total, n);
    eta.rows_mut(0, r).copy_from(&eta_inner);
    eta.rows_mut(r, s).copy_from(&eta_outer);
    let mut xi = DMatrix::zeros(n, total);
    xi.columns_mut(0, r).copy_from(&xi_inner);
    xi.columns_mut(r, s).copy_from(&xi_outer);
    let mut a = DMatrix::zeros(total, total);
    a.view_mut((0, 0), (r, r)).copy_from(&a_inner);
    a.view_mut((r, 0), (s, r)).copy_from(&cross);
    a.view_mut((0, r), (r, s)).copy_from(&cross.transpose());
    a.view_mut((r, r), (s, s)).copy_from(&outer_sigma.a);
    let chained = SigmaStructure {
        t,
        eta: eta.clone(),
        xi,
        nmap: a.clone(),
        a,
        nmat: eta,
    };

    // Direct route: the composed chart's own tangent frame with the combined
    // normals pushed to the ambient space.
    let composed_frame = chain.composed.frame_at(v)?;
    let mut f = DMatrix::zeros(amb.dim(), total);
    f.columns_mut(0, r).copy_from(&(&outer_frame.e * &f_in));
    f.columns_mut(r, s).copy_from(&outer_frame.f);
    let direct_frame = composed_frame.with_normals(f)?;
    let direct = decompose(amb, &direct_frame)?;
    let e_chain = &outer_frame.e * &e_in;
    let tangent_mismatch =
        max_abs(&(&direct_frame.e * direct_frame.e.transpose() - &e_chain * e_chain.transpose()));
    Ok(ChainPoint {
        direct,
        chained,
        outer: outer_sigma,
        tangent_mismatch,
    })
}

/// Largest entrywise difference between two structures of equal shape.
pub fn sigma_distance(a: &SigmaStructure, b: &SigmaStructure) -> f64 {
    let d = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        if x.shape() != y.shape() {
            f64::INFINITY
        } else {
            max_abs(&(x - y))
        }
    };
    d(&a.t, &b.t).max(d(&a.eta, &b.eta)).max(d(&a.xi, &b.xi)).max(d(&a.a, &b.a))
}

/// Compares the directly induced structure with the one induced through
/// `Mbar`, and checks the algebraic identities of both `Mbar` and the
/// extended structure on `M`.
pub fn verify_inheritance_chain(
    amb: &AmbientStructure,
    chain: &Chain,
    samples: usize,
    seed: u64,
    tol: f64,
    identity_tol: f64,
) -> Result<Checks> {
    let points = chain
        .composed
        .sample_points_where(samples, seed, |v| chain_point(amb, chain, v).is_ok())?;
    let mut out = Checks::new();
    for v in &points {
        let cp = chain_point(amb, chain, v)?;
        out.record("inheritance.direct_vs_chained", sigma_distance(&cp.direct, &cp.chained), tol, Some(v));
        out.record("inheritance.tangent_spaces", cp.tangent_mismatch, tol, Some(v));
        let ext = structure_identity_residuals(&cp.chained, amb.params());
        let outer = structure_identity_residuals(&cp.outer, amb.params());
        for (k, name) in STRUCTURE_IDENTITY_NAMES.iter().enumerate() {
            out.record(&format!("inheritance.extended.{}", &name[6..]), ext[k], identity_tol, Some(v));
            out.record(&format!("inheritance.outer.{}", &name[6..]), outer[k], identity_tol, Some(v));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{make_split_structure, AmbientStructure};
    use crate::chart::LinearChart;
    use crate::immersion::ParamBox;

    fn line(amb: &AmbientStructure, dir: &[f64]) -> (PointFrame, SigmaStructure) {
        let b = DMatrix::from_column_slice(dir.len(), 1, dir);
        let imm = Immersion::new(Arc::new(LinearChart::new(b)), ParamBox::cube(1, -1.0, 1.0)).unwrap();
        let fr = imm.frame_at(&DVector::from_vec(vec![0.0])).unwrap();
        let s = decompose(amb, &fr).unwrap();
        (fr, s)
    }

    fn golden_plane() -> AmbientStructure {
        make_split_structure(1, 1, MetallicParams::golden()).unwrap()
    }

    #[test]
    fn invariant_line() {
        let amb = golden_plane();
        let (_, s) = line(&amb, &[1.0, 0.0]);
        let p = amb.params();
        assert!((s.t[(0, 0)] - p.sigma).abs() < 1e-15);
        assert_eq!(s.eta[(0, 0)], 0.0);
        assert!((s.a[(0, 0)] - p.sigma_bar).abs() < 1e-15);
        assert_eq!(classify_pointwise(&s, 1e-7), PointClass::Invariant);
        let [r1, ..] = structure_identity_residuals(&s, p);
        assert!(r1 < 1e-14);
    }

    #[test]
    fn anti_invariant_line() {
        let amb = golden_plane();
        let p = *amb.params();
        let (_, s) = line(&amb, &[1.0, p.sigma / p.qf().sqrt()]);
        assert!(s.t[(0, 0)].abs() < 1e-15);
        assert_eq!(classify_pointwise(&s, 1e-7), PointClass::AntiInvariant);
        assert!((s.eta_xi()[(0, 0)] - p.qf()).abs() < 1e-14);
    }

    #[test]
    fn mixed_line() {
        let amb = golden_plane();
        let (_, s) = line(&amb, &[1.0, 1.0]);
        assert!((s.t[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(classify_pointwise(&s, 1e-7), PointClass::Mixed);
        assert!(structure_identity_residuals(&s, amb.params()).iter().all(|r| *r < 1e-14));
    }

    #[test]
    fn notation_identities() {
        let amb = golden_plane();
        let (_, s) = line(&amb, &[0.3, -0.8]);
        assert_eq!(s.nmat, s.eta);
        assert_eq!(s.nmap, s.a);
        assert!(max_abs(&(&s.eta - s.xi.transpose())) < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let amb = make_split_structure(2, 1, MetallicParams::golden()).unwrap();
        let (fr, _) = line(&golden_plane(), &[1.0, 0.0]);
        assert!(matches!(decompose(&amb, &fr), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pairs_are_unit_and_seeded() {
        let a = seeded_pairs(3, 4, 9);
        assert_eq!(a, seeded_pairs(3, 4, 9));
        assert!(a.iter().all(|(x, y)| (x.norm() - 1.0).abs() < 1e-15 && (y.norm() - 1.0).abs() < 1e-15));
    }
}
