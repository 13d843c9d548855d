//! Chart-based immersed submanifolds: derivatives, orthonormal frames and
//! reproducible sampling.
//!
//! Frames are deterministic functions of the chart point. The tangent frame
//! is the Gram-Schmidt QR factor of the Jacobian columns in chart order. The
//! normal frame either comes from an explicit override or from Gram-Schmidt of
//! the ambient coordinate axes, in index order, against the tangent space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartMap, Hessian};
use crate::error::{Error, Result};
use crate::linalg::{orthogonalize_against, thin_qr};

/// Smallest singular value a Jacobian may have at an accepted point.
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Axes whose residual against the frame so far is below this are skipped.
pub const PIVOT_THRESHOLD: f64 = 1e-8;
/// Accepted pivots below this residual make the frame too ill-conditioned to
/// differentiate; stencils touching such frames are rejected.
pub const PIVOT_GUARD: f64 = 1e-3;
/// Tolerance for the orthonormality invariants of a [`PointFrame`].
pub const FRAME_TOL: f64 = 1e-10;
/// Retries per requested sample when a draw is rejected.
pub const SAMPLE_RETRIES: usize = 10;

/// Base relative step for differencing frames and frame-derived fields.
pub fn frame_step_base() -> f64 {
    f64::EPSILON.powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Derivatives supplied by the chart.
    #[default]
    Analytic,
    /// Central differences of the chart map.
    CentralDifference,
}

/// Axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Domain("parameter box has an empty side".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Box shrunk by the difference margin on every side.
    pub fn shrunk(&self) -> Result<Self> {
        let lo: Vec<f64> = self.lo.iter().map(|l| l + sample_margin(*l)).collect();
        let hi: Vec<f64> = self.hi.iter().map(|h| h - sample_margin(*h)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Domain("parameter box is empty after the difference margin".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.len() == self.dim() && u.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }
}

fn sample_margin(bound: f64) -> f64 {
    1e-3 * bound.abs().max(1.0)
}

/// Map from `(chart point, ambient point)` to an `N x r` matrix of unit normals.
pub type FrameOverride = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An immersed submanifold given by one chart.
#[derive(Clone)]
pub struct Immersion {
    chart: Arc<dyn ChartMap>,
    domain: ParamBox,
    mode: DerivativeMode,
    frame_override: Option<FrameOverride>,
    step_scale: f64,
}

impl std::fmt::Debug for Immersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Immersion")
            .field("chart", &self.chart)
            .field("domain", &self.domain)
            .field("mode", &self.mode)
            .field("frame_override", &self.frame_override.is_some())
            .field("step_scale", &self.step_scale)
            .finish()
    }
}

/// Orthonormal tangent and normal frames at one chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFrame {
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    /// `N x n`, orthonormal tangent columns.
    pub e: DMatrix<f64>,
    /// `N x r`, orthonormal normal columns.
    pub f: DMatrix<f64>,
    /// Chart Jacobian at `u` (in the immersion's derivative mode).
    pub jacobian: DMatrix<f64>,
    /// `n x n` upper-triangular factor with `jacobian = e * r_factor`.
    pub r_factor: DMatrix<f64>,
    /// Coordinate axes used for the normal frame; empty with an override.
    pub pivots: Vec<usize>,
    /// Smallest residual norm among accepted pivots (infinite with an override).
    pub min_pivot_residual: f64,
}

impl PointFrame {
    pub fn n(&self) -> usize {
        self.e.ncols()
    }

    pub fn r(&self) -> usize {
        self.f.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.e.nrows()
    }

    /// Replaces the normal frame, checking the orthonormality invariants.
    pub fn with_normals(&self, f: DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.f = f;
        out.pivots.clear();
        out.min_pivot_residual = f64::INFINITY;
        out.check()?;
        Ok(out)
    }

    /// Largest violation of `E^T E = I`, `F^T F = I`, `E^T F = 0`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.n();
        let r = self.r();
        let ee = (self.e.transpose() * &self.e - DMatrix::identity(n, n)).amax();
        let ff = if r == 0 { 0.0 } else { (self.f.transpose() * &self.f - DMatrix::identity(r, r)).amax() };
        let ef = if r == 0 { 0.0 } else { (self.e.transpose() * &self.f).amax() };
        ee.max(ff).max(ef)
    }

    pub fn check(&self) -> Result<()> {
        if self.e.nrows() != self.f.nrows() || self.n() + self.r() != self.ambient_dim() {
            return Err(Error::Frame(format!(
                "frame shapes {}x{} and {}x{} do not split the ambient space",
                self.e.nrows(),
                self.e.ncols(),
                self.f.nrows(),
                self.f.ncols()
            )));
        }
        let defect = self.orthonormality_defect();
        if defect > FRAME_TOL {
            return Err(Error::Frame(format!("frame not orthonormal (defect {defect:e})")));
        }
        Ok(())
    }

    /// Chart coordinates of an ambient tangent vector: `(J^T J)^{-1} J^T v`.
    pub fn chart_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        let frame_coords = self.e.transpose() * v;
        self.r_factor
            .clone()
            .solve_upper_triangular(&frame_coords)
            .expect("R has a positive diagonal")
    }

    /// Chart coordinates of the tangent frame vectors (columns of `R^{-1}`).
    pub fn frame_in_chart(&self) -> DMatrix<f64> {
        let n = self.n();
        self.r_factor
            .clone()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .expect("R has a positive diagonal")
    }
}

impl Immersion {
    pub fn new(chart: Arc<dyn ChartMap>, domain: ParamBox) -> Result<Self> {
        let n = chart.intrinsic_dim();
        let big_n = chart.ambient_dim();
        if n < 1 || n >= big_n {
            return Err(Error::Domain(format!(
                "need 1 <= n < N, got n={n}, N={big_n}"
            )));
        }
        if big_n > crate::ambient::MAX_AMBIENT_DIM {
            return Err(Error::Domain(format!("ambient dimension {big_n} too large")));
        }
        if domain.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: domain.dim(),
            });
        }
        Ok(Self {
            chart,
            domain,
            mode: DerivativeMode::Analytic,
            frame_override: None,
            step_scale: 1.0,
        })
    }

    pub fn with_frame_override(mut self, f: FrameOverride) -> Self {
        self.frame_override = Some(f);
        self
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    /// Multiplies every difference step (chart and frame) by `scale`.
    pub fn with_step_scale(mut self, scale: f64) -> Self {
        self.step_scale = scale;
        self
    }

    pub fn n(&self) -> usize {
        self.chart.intrinsic_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.chart.ambient_dim()
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.n()
    }

    pub fn domain(&self) -> &ParamBox {
        &self.domain
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn step_scale(&self) -> f64 {
        self.step_scale
    }

    pub fn has_frame_override(&self) -> bool {
        self.frame_override.is_some()
    }

    pub fn chart(&self) -> &Arc<dyn ChartMap> {
        &self.chart
    }

    pub fn eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(u)?;
        Ok(self.chart.eval(u))
    }

    fn check_point(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: u.len(),
            });
        }
        Ok(())
    }

    fn jacobian_step(&self, ui: f64) -> f64 {
        f64::EPSILON.cbrt() * ui.abs().max(1.0) * self.step_scale
    }

    fn hessian_step(&self, ui: f64) -> f64 {
        f64::EPSILON.powf(0.25) * ui.abs().max(1.0) * self.step_scale
    }

    /// Step used when differencing frames along chart axis `i` at `u`.
    pub fn frame_step(&self, u: &DVector<f64>, i: usize) -> f64 {
        frame_step_base() * u[i].abs().max(1.0) * self.step_scale
    }

    /// Jacobian without the rank check.
    pub fn raw_jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(u)?;
        let analytic = match self.mode {
            DerivativeMode::Analytic => self.chart.jacobian(u),
            DerivativeMode::CentralDifference => None,
        };
        Ok(analytic.unwrap_or_else(|| self.fd_jacobian(u)))
    }

    fn fd_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut jac = DMatrix::zeros(self.ambient_dim(), n);
        for i in 0..n {
            let h = self.jacobian_step(u[i]);
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let span = up[i] - dn[i];
            jac.set_column(i, &((self.chart.eval(&up) - self.chart.eval(&dn)) / span));
        }
        jac
    }

    /// Chart Jacobian `df/du`; fails at rank-deficient points.
    pub fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let jac = self.raw_jacobian(u)?;
        let sv = jac.clone().singular_values();
        let mut values: Vec<f64> = sv.iter().copied().collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let smallest = values.last().copied().unwrap_or(0.0);
        if !(smallest >= RANK_THRESHOLD) {
            return Err(Error::Degenerate {
                smallest,
                singular_values: values,
            });
        }
        Ok(jac)
    }

    /// Second derivatives `d^2 f / du_i du_j`.
    pub fn hessian(&self, u: &DVector<f64>) -> Result<Hessian> {
        self.jacobian(u)?;
        let analytic = match self.mode {
            DerivativeMode::Analytic => self.chart.hessian(u),
            DerivativeMode::CentralDifference => None,
        };
        Ok(analytic.unwrap_or_else(|| self.fd_hessian(u)))
    }

    fn fd_hessian(&self, u: &DVector<f64>) -> Hessian {
        let n = self.n();
        let big_n = self.ambient_dim();
        let f0 = self.chart.eval(u);
        let mut out = Hessian::zeros(big_n, n);
        let shifted = |pairs: &[(usize, f64)]| {
            let mut v = u.clone();
            for &(k, d) in pairs {
                v[k] += d;
            }
            self.chart.eval(&v)
        };
        for i in 0..n {
            let hi = self.hessian_step(u[i]);
            let diag = (shifted(&[(i, hi)]) - &f0 * 2.0 + shifted(&[(i, -hi)])) / (hi * hi);
            out.slices[i].set_column(i, &diag);
            for j in 0..i {
                let hj = self.hessian_step(u[j]);
                let mixed = (shifted(&[(i, hi), (j, hj)]) - shifted(&[(i, hi), (j, -hj)])
                    - shifted(&[(i, -hi), (j, hj)])
                    + shifted(&[(i, -hi), (j, -hj)]))
                    / (4.0 * hi * hj);
                out.slices[i].set_column(j, &mixed);
                out.slices[j].set_column(i, &mixed);
            }
        }
        out
    }

    /// Orthonormal tangent and normal frames at `u`.
    pub fn frame_at(&self, u: &DVector<f64>) -> Result<PointFrame> {
        let jac = self.jacobian(u)?;
        let x = self.chart.eval(u);
        let big_n = self.ambient_dim();
        let r = self.codim();
        let frame = match &self.frame_override {
            Some(over) => {
                let f = over(u, &x);
                if f.nrows() != big_n || f.ncols() != r {
                    return Err(Error::Frame(format!(
                        "override frame is {}x{}, expected {big_n}x{r}",
                        f.nrows(),
                        f.ncols()
                    )));
                }
                // Tangent frame: the Jacobian projected off the override normals.
                let leak = (f.transpose() * &jac).amax() / jac.amax();
                if leak > 1e-6 {
                    return Err(Error::Frame(format!(
                        "override normals are not normal to the chart (leak {leak:e})"
                    )));
                }
                let projected = &jac - &f * (f.transpose() * &jac);
                let (e, _) = thin_qr(&projected).ok_or_else(|| Error::Frame("tangent QR failed".into()))?;
                let r_factor = e.transpose() * &jac;
                let r_factor = r_factor.upper_triangle();
                PointFrame {
                    u: u.clone(),
                    x,
                    e,
                    f,
                    jacobian: jac,
                    r_factor,
                    pivots: Vec::new(),
                    min_pivot_residual: f64::INFINITY,
                }
            }
            None => {
                let (e, r_factor) = thin_qr(&jac).ok_or_else(|| Error::Frame("tangent QR failed".into()))?;
                let mut basis: Vec<DVector<f64>> = e.column_iter().map(|c| c.clone_owned()).collect();
                let mut normals = Vec::with_capacity(r);
                let mut pivots = Vec::with_capacity(r);
                let mut min_res = f64::INFINITY;
                for axis in 0..big_n {
                    if normals.len() == r {
                        break;
                    }
                    let mut v = DVector::zeros(big_n);
                    v[axis] = 1.0;
                    orthogonalize_against(&mut v, &basis);
                    let res = v.norm();
                    if res < PIVOT_THRESHOLD {
                        continue;
                    }
                    v /= res;
                    basis.push(v.clone());
                    normals.push(v);
                    pivots.push(axis);
                    min_res = min_res.min(res);
                }
                if normals.len() != r {
                    return Err(Error::Frame("could not complete the normal frame".into()));
                }
                let f = if r == 0 { DMatrix::zeros(big_n, 0) } else { DMatrix::from_columns(&normals) };
                PointFrame {
                    u: u.clone(),
                    x,
                    e,
                    f,
                    jacobian: jac,
                    r_factor,
                    pivots,
                    min_pivot_residual: min_res,
                }
            }
        };
        frame.check()?;
        Ok(frame)
    }

    /// Frames at `u` and at `u +- h_i e_i` for every chart axis.
    pub fn frame_stencil(&self, u: &DVector<f64>) -> Result<FrameStencil> {
        let center = self.frame_at(u)?;
        let mut plus = Vec::with_capacity(self.n());
        let mut minus = Vec::with_capacity(self.n());
        let mut steps = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let h = self.frame_step(u, i);
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let span = up[i] - dn[i];
            let fp = self.frame_at(&up)?;
            let fm = self.frame_at(&dn)?;
            for fr in [&fp, &fm] {
                if fr.pivots != center.pivots || fr.min_pivot_residual < PIVOT_GUARD {
                    return Err(Error::FrameDiscontinuity);
                }
            }
            if center.min_pivot_residual < PIVOT_GUARD {
                return Err(Error::FrameDiscontinuity);
            }
            plus.push(fp);
            minus.push(fm);
            steps.push(span);
        }
        Ok(FrameStencil {
            center,
            plus,
            minus,
            spans: steps,
        })
    }

    /// `count` reproducible uniform draws from the shrunken domain.
    ///
    /// Draws come from ChaCha8 seeded with `seed`, one `f64` in `[0, 1)` per
    /// coordinate; rank-deficient draws are replaced by the next draw, at most
    /// [`SAMPLE_RETRIES`] times per point.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        self.sample_points_where(count, seed, |u| self.jacobian(u).is_ok())
    }

    /// As [`Self::sample_points`] with a caller-supplied acceptance test.
    pub fn sample_points_where<P>(&self, count: usize, seed: u64, accept: P) -> Result<Vec<DVector<f64>>>
    where
        P: Fn(&DVector<f64>) -> bool,
    {
        if count == 0 {
            return Err(Error::Domain("sample count must be at least 1".into()));
        }
        let boxed = self.domain.shrunk()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut accepted = None;
            for _attempt in 0..=SAMPLE_RETRIES {
                let u = DVector::from_fn(boxed.dim(), |i, _| {
                    let t: f64 = rng.gen();
                    boxed.lo[i] + (boxed.hi[i] - boxed.lo[i]) * t
                });
                if accept(&u) {
                    accepted = Some(u);
                    break;
                }
            }
            match accepted {
                Some(u) => out.push(u),
                None => {
                    return Err(Error::Domain(format!(
                        "no acceptable sample after {} retries",
                        SAMPLE_RETRIES
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// Frames at a point and along the central-difference stencil around it.
#[derive(Debug, Clone)]
pub struct FrameStencil {
    pub center: PointFrame,
    pub plus: Vec<PointFrame>,
    pub minus: Vec<PointFrame>,
    /// `2 h_i` for each axis.
    pub spans: Vec<f64>,
}

impl FrameStencil {
    /// Directional derivative along the chart vector `dir` of a vector field
    /// computed from frames.
    pub fn derive_vec<F>(&self, dir: &DVector<f64>, field: F) -> DVector<f64>
    where
        F: Fn(&PointFrame) -> DVector<f64>,
    {
        let mut out = field(&self.center) * 0.0;
        for i in 0..dir.len() {
            if dir[i] != 0.0 {
                out += (field(&self.plus[i]) - field(&self.minus[i])) * (dir[i] / self.spans[i]);
            }
        }
        out
    }

    pub fn derive_mat<F>(&self, dir: &DVector<f64>, field: F) -> DMatrix<f64>
    where
        F: Fn(&PointFrame) -> DMatrix<f64>,
    {
        let mut out = field(&self.center) * 0.0;
        for i in 0..dir.len() {
            if dir[i] != 0.0 {
                out += (field(&self.plus[i]) - field(&self.minus[i])) * (dir[i] / self.spans[i]);
            }
        }
        out
    }

    pub fn derive_scalar<F>(&self, dir: &DVector<f64>, field: F) -> f64
    where
        F: Fn(&PointFrame) -> f64,
    {
        (0..dir.len())
            .filter(|&i| dir[i] != 0.0)
            .map(|i| (field(&self.plus[i]) - field(&self.minus[i])) * (dir[i] / self.spans[i]))
            .sum()
    }

    /// Largest ratio `|F(u +- h e_i) - F(u)|_max / h` over the stencil.
    pub fn normal_frame_speed(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.plus.len() {
            let h = 0.5 * self.spans[i];
            for fr in [&self.plus[i], &self.minus[i]] {
                if fr.f.ncols() > 0 {
                    worst = worst.max((&fr.f - &self.center.f).amax() / h);
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{scaled, unit_sphere_monomials, LinearChart, Trig, TrigChart, TrigMonomial};

    fn circle() -> Immersion {
        let chart = TrigChart::new(
            1,
            vec![
                TrigMonomial { scale: 1.0, factors: vec![(0, Trig::Cos)] },
                TrigMonomial { scale: 1.0, factors: vec![(0, Trig::Sin)] },
            ],
        );
        Immersion::new(Arc::new(chart), ParamBox::cube(1, -3.0, 3.0)).unwrap()
    }

    fn sphere2(radius: f64) -> Immersion {
        let chart = TrigChart::new(2, scaled(unit_sphere_monomials(2, 0), radius, &[]));
        Immersion::new(
            Arc::new(chart),
            ParamBox::new(vec![0.1, -3.0], vec![std::f64::consts::PI - 0.1, 3.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn circle_jacobian() {
        let c = circle();
        let jac = c.jacobian(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((jac[(0, 0)]).abs() < 1e-15 && (jac[(1, 0)] - 1.0).abs() < 1e-15);
        let fd = c.clone().with_mode(DerivativeMode::CentralDifference);
        let jac_fd = fd.jacobian(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((jac_fd - jac).amax() < 1e-9);
    }

    #[test]
    fn linear_chart_is_exact() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, -1.0]);
        let imm = Immersion::new(Arc::new(LinearChart::new(b.clone())), ParamBox::cube(2, -1.0, 1.0)).unwrap();
        let u = DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(imm.jacobian(&u).unwrap(), b);
        let h = imm.hessian(&u).unwrap();
        assert!(h.slices.iter().all(|s| s.amax() == 0.0));
        let h_fd = imm.clone().with_mode(DerivativeMode::CentralDifference).hessian(&u).unwrap();
        assert!(h_fd.slices.iter().all(|s| s.amax() < 1e-7));
    }

    #[test]
    fn sphere_derivative_modes_agree() {
        let s = sphere2(1.7);
        let fd = s.clone().with_mode(DerivativeMode::CentralDifference);
        for u in s.sample_points(20, 5).unwrap() {
            assert!((s.jacobian(&u).unwrap() - fd.jacobian(&u).unwrap()).amax() <= 1e-7);
            let ha = s.hessian(&u).unwrap();
            let hf = fd.hessian(&u).unwrap();
            assert!(ha.max_abs_diff(&hf) <= 1e-5);
            assert!(hf.asymmetry() <= 1e-6);
        }
    }

    #[test]
    fn circle_hessian() {
        let h = circle().hessian(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((h.second(0, 0) - DVector::from_vec(vec![-1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn degenerate_point_is_rejected() {
        let s = sphere2(1.0);
        let err = s.jacobian(&DVector::from_vec(vec![0.0, 0.5])).unwrap_err();
        match err {
            Error::Degenerate { smallest, singular_values } => {
                assert!(smallest < RANK_THRESHOLD);
                assert_eq!(singular_values.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagonal_line_frame() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let imm = Immersion::new(Arc::new(LinearChart::new(b)), ParamBox::cube(1, -1.0, 1.0)).unwrap();
        let fr = imm.frame_at(&DVector::from_vec(vec![0.2])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fr.e[(0, 0)] - s).abs() < 1e-15 && (fr.e[(1, 0)] - s).abs() < 1e-15);
        assert!((fr.f[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((fr.f[(0, 0)] + fr.f[(1, 0)]).abs() < 1e-15);
        assert_eq!(fr.pivots, vec![0]);
        assert!(fr.orthonormality_defect() <= FRAME_TOL);
    }

    #[test]
    fn frame_spans_jacobian() {
        let s = sphere2(2.0);
        for u in s.sample_points(10, 11).unwrap() {
            let fr = s.frame_at(&u).unwrap();
            let p = &fr.e * fr.e.transpose();
            assert!((&p * &fr.jacobian - &fr.jacobian).amax() < 1e-12);
            assert!((&fr.e * &fr.r_factor - &fr.jacobian).amax() < 1e-12);
            assert!((fr.e.transpose() * &fr.f).amax() <= FRAME_TOL);
            let v = &fr.jacobian * DVector::from_vec(vec![0.3, -1.2]);
            assert!((fr.chart_coords(&v) - DVector::from_vec(vec![0.3, -1.2])).amax() < 1e-12);
        }
    }

    #[test]
    fn override_frame_is_used() {
        let s = sphere2(2.0).with_frame_override(Arc::new(|_u, x: &DVector<f64>| {
            DMatrix::from_column_slice(3, 1, (x / x.norm()).as_slice())
        }));
        let u = DVector::from_vec(vec![1.0, 0.4]);
        let fr = s.frame_at(&u).unwrap();
        let x = s.eval(&u).unwrap();
        assert!((fr.f.column(0) - &x / 2.0).amax() < 1e-15);

        let bad = sphere2(2.0).with_frame_override(Arc::new(|_u, _x: &DVector<f64>| {
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])
        }));
        assert!(matches!(bad.frame_at(&u), Err(Error::Frame(_))));
    }

    #[test]
    fn sampling_is_reproducible_and_inside() {
        let s = sphere2(1.0);
        let a = s.sample_points(100, 42).unwrap();
        let b = s.sample_points(100, 42).unwrap();
        assert_eq!(a, b);
        let shrunk = s.domain().shrunk().unwrap();
        assert!(a.iter().all(|u| shrunk.contains(u)));
        let one = s.sample_points(1, 0).unwrap();
        assert_eq!(one, s.sample_points(1, 0).unwrap());
        assert_ne!(s.sample_points(5, 1).unwrap(), s.sample_points(5, 2).unwrap());
        assert!(s.sample_points(0, 1).is_err());
    }

    #[test]
    fn empty_box_after_margin() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let imm = Immersion::new(
            Arc::new(LinearChart::new(b)),
            ParamBox::new(vec![0.0], vec![1e-4]).unwrap(),
        )
        .unwrap();
        assert!(imm.sample_points(3, 0).is_err());
    }

    #[test]
    fn normal_frame_is_smooth() {
        let s = sphere2(1.5);
        for u in s.sample_points(10, 3).unwrap() {
            let Ok(st) = s.frame_stencil(&u) else { continue };
            assert!(st.normal_frame_speed() < 10.0);
        }
    }
}
