//! Slant angles and the slant characterizations of the induced structure.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::AmbientStructure;
use crate::error::{Error, Result};
use crate::immersion::Immersion;
use crate::linalg::max_abs;
use crate::report::{real, real_vec};
use crate::scalars::MetallicParams;
use crate::sigma::{decompose, seeded_pairs, SigmaStructure, PAIR_COUNT, PAIR_SEED};

/// Angle between `JX` and the tangent space, for `X` in tangent frame coordinates.
///
/// Computed as `atan2(|NX|, |TX|)`.
pub fn slant_angle(sigma: &SigmaStructure, x: &DVector<f64>) -> Result<f64> {
    if x.len() != sigma.n() {
        return Err(Error::DimensionMismatch {
            expected: sigma.n(),
            found: x.len(),
        });
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::Domain("slant angle of the zero vector".into()));
    }
    let tx = (&sigma.t * x).norm();
    let nx = (&sigma.nmat * x).norm();
    Ok(nx.atan2(tx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlantClass {
    Invariant,
    AntiInvariant,
    ProperSlant {
        #[serde(serialize_with = "real")]
        theta: f64,
    },
    NotSlant,
}

impl SlantClass {
    pub fn is_slant(&self) -> bool {
        !matches!(self, SlantClass::NotSlant)
    }
}

/// A tangent direction together with the chart point it lives at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    #[serde(serialize_with = "real_vec")]
    pub u: Vec<f64>,
    #[serde(serialize_with = "real_vec")]
    pub direction: Vec<f64>,
    #[serde(serialize_with = "real")]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleAngles {
    #[serde(serialize_with = "real_vec")]
    pub u: Vec<f64>,
    #[serde(serialize_with = "real")]
    pub min: f64,
    #[serde(serialize_with = "real")]
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlantReport {
    pub classification: SlantClass,
    #[serde(serialize_with = "real")]
    pub mean_theta: f64,
    #[serde(serialize_with = "real")]
    pub max_deviation: f64,
    #[serde(serialize_with = "real")]
    pub lambda_hat: f64,
    pub per_sample: Vec<SampleAngles>,
    /// Directions attaining the smallest and largest angle.
    pub witnesses: (Witness, Witness),
    /// Largest `|T^2 - lambda (pT + qI)|` over the samples (slant verdicts only).
    #[serde(serialize_with = "crate::report::real_opt")]
    pub quadratic_residual: Option<f64>,
    /// Largest residual of the two quadratic slant identities (slant verdicts only).
    #[serde(serialize_with = "crate::report::real_opt")]
    pub angle_identities_residual: Option<f64>,
    /// Largest `|T^2 - tan^-2(theta) sum eta_a (x) xi_a|` (proper slant only).
    #[serde(serialize_with = "crate::report::real_opt")]
    pub eta_xi_residual: Option<f64>,
    pub angle_tol: f64,
}

/// Direction set at one point: the frame axes followed by `extra` seeded unit vectors.
pub fn direction_set(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }))
        .collect();
    while out.len() < n + extra {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 {
            out.push(v / norm);
        }
    }
    out
}

/// Evaluates the slant angle over seeded directions at seeded points and
/// classifies the submanifold.
pub fn classify_slant(
    imm: &Immersion,
    amb: &AmbientStructure,
    samples: usize,
    directions: usize,
    seed: u64,
    angle_tol: f64,
) -> Result<SlantReport> {
    if directions < imm.n() {
        return Err(Error::Domain(format!(
            "need at least n = {} directions, got {directions}",
            imm.n()
        )));
    }
    let points = imm.sample_points(samples, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a7);
    let mut sigmas = Vec::with_capacity(points.len());
    let mut per_sample = Vec::with_capacity(points.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut lo: Option<Witness> = None;
    let mut hi: Option<Witness> = None;
    for u in &points {
        let frame = imm.frame_at(u)?;
        let sigma = decompose(amb, &frame)?;
        let mut smin = f64::INFINITY;
        let mut smax = f64::NEG_INFINITY;
        for d in direction_set(imm.n(), directions - imm.n(), &mut rng) {
            let theta = slant_angle(&sigma, &d)?;
            sum += theta;
            count += 1;
            smin = smin.min(theta);
            smax = smax.max(theta);
            let w = || Witness {
                u: u.iter().copied().collect(),
                direction: d.iter().copied().collect(),
                theta,
            };
            if lo.as_ref().is_none_or(|l| theta < l.theta) {
                lo = Some(w());
            }
            if hi.as_ref().is_none_or(|h| theta > h.theta) {
                hi = Some(w());
            }
        }
        per_sample.push(SampleAngles {
            u: u.iter().copied().collect(),
            min: smin,
            max: smax,
        });
        sigmas.push(sigma);
    }
    let lo = lo.expect("at least one sample");
    let hi = hi.expect("at least one sample");
    let mean_theta = sum / count as f64;
    let max_deviation = hi.theta - lo.theta;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let classification = if max_deviation > angle_tol {
        SlantClass::NotSlant
    } else if mean_theta <= angle_tol {
        SlantClass::Invariant
    } else if (mean_theta - half_pi).abs() <= angle_tol {
        SlantClass::AntiInvariant
    } else {
        SlantClass::ProperSlant { theta: mean_theta }
    };
    let lambda_hat = mean_theta.cos().powi(2);
    let params = amb.params();
    let (mut r313, mut r312, mut r_eta_xi) = (None, None, None);
    if classification.is_slant() {
        let mut a: f64 = 0.0;
        let mut b: f64 = 0.0;
        for s in &sigmas {
            a = a.max(verify_slant_quadratic(s, params, lambda_hat));
            let [t_res, n_res] = verify_slant_angle_identities(s, params, mean_theta);
            b = b.max(t_res).max(n_res);
        }
        r313 = Some(a);
        r312 = Some(b);
    }
    if let SlantClass::ProperSlant { theta } = classification {
        let mut c: f64 = 0.0;
        for s in &sigmas {
            c = c.max(verify_slant_eta_xi(s, theta, angle_tol)?);
        }
        r_eta_xi = Some(c);
    }
    Ok(SlantReport {
        classification,
        mean_theta,
        max_deviation,
        lambda_hat,
        per_sample,
        witnesses: (lo, hi),
        quadratic_residual: r313,
        angle_identities_residual: r312,
        eta_xi_residual: r_eta_xi,
        angle_tol,
    })
}

/// `|T^2 - lambda (pT + qI)|_max`.
pub fn verify_slant_quadratic(sigma: &SigmaStructure, params: &MetallicParams, lambda: f64) -> f64 {
    let n = sigma.n();
    let t = &sigma.t;
    let rhs = (t * params.pf() + DMatrix::identity(n, n) * params.qf()) * lambda;
    max_abs(&(t * t - rhs))
}

/// Residuals of `g(TX,TY) = cos^2 [p g(X,JY) + q g(X,Y)]` and
/// `g(NX,NY) = sin^2 [p g(X,JY) + q g(X,Y)]` over the seeded pairs.
pub fn verify_slant_angle_identities(sigma: &SigmaStructure, params: &MetallicParams, theta: f64) -> [f64; 2] {
    let (c2, s2) = (theta.cos().powi(2), theta.sin().powi(2));
    let mut out = [0.0f64; 2];
    for (x, y) in seeded_pairs(sigma.n(), PAIR_COUNT, PAIR_SEED) {
        // g(X, JY) = g(X, TY) for tangent X.
        let base = params.pf() * x.dot(&(&sigma.t * &y)) + params.qf() * x.dot(&y);
        let tt = (&sigma.t * &x).dot(&(&sigma.t * &y));
        let nn = (&sigma.nmat * &x).dot(&(&sigma.nmat * &y));
        out[0] = out[0].max((tt - c2 * base).abs());
        out[1] = out[1].max((nn - s2 * base).abs());
    }
    out
}

/// `|T^2 - tan^-2(theta) sum_a eta_a (x) xi_a|_max`; only for proper slant angles.
pub fn verify_slant_eta_xi(sigma: &SigmaStructure, theta: f64, angle_tol: f64) -> Result<f64> {
    if theta < angle_tol || theta > std::f64::consts::FRAC_PI_2 - angle_tol {
        return Err(Error::Precondition(format!(
            "angle {theta} is not a proper slant angle"
        )));
    }
    let t = &sigma.t;
    let rhs = sigma.eta_xi() / theta.tan().powi(2);
    Ok(max_abs(&(t * t - rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::make_split_structure;
    use crate::chart::LinearChart;
    use crate::immersion::ParamBox;
    use std::sync::Arc;

    fn linear(cols: &[&[f64]]) -> Immersion {
        let n = cols.len();
        let big = cols[0].len();
        let b = DMatrix::from_fn(big, n, |i, j| cols[j][i]);
        Immersion::new(Arc::new(LinearChart::new(b)), ParamBox::cube(n, -1.0, 1.0)).unwrap()
    }

    fn sigma_of(amb: &AmbientStructure, imm: &Immersion) -> SigmaStructure {
        decompose(amb, &imm.frame_at(&DVector::zeros(imm.n())).unwrap()).unwrap()
    }

    #[test]
    fn mixed_line_angle() {
        let amb = make_split_structure(1, 1, MetallicParams::golden()).unwrap();
        let imm = linear(&[&[1.0, 1.0]]);
        let s = sigma_of(&amb, &imm);
        let theta = slant_angle(&s, &DVector::from_vec(vec![1.0])).unwrap();
        assert!((theta - (1.0 / 6.0f64.sqrt()).acos()).abs() < 1e-15);
        let rep = classify_slant(&imm, &amb, 3, 4, 1, 1e-6).unwrap();
        assert!(matches!(rep.classification, SlantClass::ProperSlant { .. }));
        assert!((rep.lambda_hat - 1.0 / 6.0).abs() < 1e-14);
        assert!(rep.max_deviation <= 1e-12);
        assert!(rep.quadratic_residual.unwrap() <= 1e-12);
        assert!(rep.eta_xi_residual.unwrap() <= 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        let amb = make_split_structure(1, 1, MetallicParams::golden()).unwrap();
        let s = sigma_of(&amb, &linear(&[&[1.0, 0.0]]));
        assert!(slant_angle(&s, &DVector::from_vec(vec![0.0])).is_err());
        assert!(verify_slant_eta_xi(&s, 0.0, 1e-6).is_err());
    }

    #[test]
    fn mixing_plane_is_not_slant() {
        let p = MetallicParams::new(2, 3).unwrap();
        let amb = make_split_structure(2, 2, p).unwrap();
        let k = p.sigma / p.qf().sqrt();
        let imm = linear(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, k]]);
        let rep = classify_slant(&imm, &amb, 2, 6, 3, 1e-6).unwrap();
        assert_eq!(rep.classification, SlantClass::NotSlant);
        assert!(rep.witnesses.0.theta < 1e-12);
        assert!((rep.witnesses.1.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
