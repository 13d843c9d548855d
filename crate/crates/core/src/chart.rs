//! Parametric chart maps `u -> f(u)` with optional analytic derivatives.

use std::fmt;

use nalgebra::{DMatrix, DVector};

/// Second derivatives of a chart map: `slices[i]` is the `N x n` matrix whose
/// column `j` is `d^2 f / du_i du_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    pub slices: Vec<DMatrix<f64>>,
}

impl Hessian {
    pub fn zeros(ambient: usize, n: usize) -> Self {
        Self {
            slices: vec![DMatrix::zeros(ambient, n); n],
        }
    }

    pub fn second(&self, i: usize, j: usize) -> DVector<f64> {
        self.slices[i].column(j).clone_owned()
    }

    /// `sum_ij x_i y_j d^2 f / du_i du_j`.
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let ambient = self.slices.first().map_or(0, |s| s.nrows());
        let mut out = DVector::zeros(ambient);
        for (i, s) in self.slices.iter().enumerate() {
            if x[i] != 0.0 {
                out += s * y * x[i];
            }
        }
        out
    }

    /// Largest asymmetry `|f_ij - f_ji|` over all pairs.
    pub fn asymmetry(&self) -> f64 {
        let n = self.slices.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = (self.slices[i].column(j) - self.slices[j].column(i)).amax();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Hessian) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// A smooth map from a parameter box in `R^n` to `R^N`.
pub trait ChartMap: Send + Sync + fmt::Debug {
    fn intrinsic_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn eval(&self, u: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian, when the chart knows it.
    fn jacobian(&self, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic second derivatives, when the chart knows them.
    fn hessian(&self, _u: &DVector<f64>) -> Option<Hessian> {
        None
    }
}

/// Affine chart `u -> B u + c`.
#[derive(Debug, Clone)]
pub struct LinearChart {
    pub basis: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearChart {
    pub fn new(basis: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(basis.nrows());
        Self { basis, offset }
    }
}

impl ChartMap for LinearChart {
    fn intrinsic_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.basis * u + &self.offset
    }

    fn jacobian(&self, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.basis.clone())
    }

    fn hessian(&self, _u: &DVector<f64>) -> Option<Hessian> {
        Some(Hessian::zeros(self.ambient_dim(), self.intrinsic_dim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    /// Value and first two derivatives at `t`.
    fn jet(self, t: f64) -> (f64, f64, f64) {
        let (s, c) = t.sin_cos();
        match self {
            Trig::Cos => (c, -s, -c),
            Trig::Sin => (s, c, -s),
        }
    }
}

/// One ambient coordinate of the form `scale * prod_k trig_k(u[param_k])`,
/// each parameter appearing at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMonomial {
    pub scale: f64,
    pub factors: Vec<(usize, Trig)>,
}

/// Chart whose coordinates are trigonometric monomials in the parameters.
/// Hyperspherical charts, products of spheres and helices all have this form.
#[derive(Debug, Clone)]
pub struct TrigChart {
    n: usize,
    coords: Vec<TrigMonomial>,
}

impl TrigChart {
    pub fn new(n: usize, coords: Vec<TrigMonomial>) -> Self {
        for m in &coords {
            let mut seen = vec![false; n];
            for &(k, _) in &m.factors {
                assert!(k < n, "factor parameter {k} out of range");
                assert!(!seen[k], "parameter {k} repeated in one monomial");
                seen[k] = true;
            }
        }
        Self { n, coords }
    }

    pub fn coords(&self) -> &[TrigMonomial] {
        &self.coords
    }

    /// Values and derivatives of the factors of monomial `m` at `u`.
    fn factor_jets(m: &TrigMonomial, u: &DVector<f64>) -> Vec<(usize, f64, f64, f64)> {
        m.factors
            .iter()
            .map(|&(k, t)| {
                let (v, d1, d2) = t.jet(u[k]);
                (k, v, d1, d2)
            })
            .collect()
    }
}

impl ChartMap for TrigChart {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }

    fn ambient_dim(&self) -> usize {
        self.coords.len()
    }

    fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|m| {
                m.factors
                    .iter()
                    .fold(m.scale, |acc, &(k, t)| acc * t.jet(u[k]).0)
            }),
        )
    }

    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.coords.len(), self.n);
        for (row, m) in self.coords.iter().enumerate() {
            let jets = Self::factor_jets(m, u);
            for (a, &(k, _, d1, _)) in jets.iter().enumerate() {
                let rest: f64 = jets
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, j)| j.1)
                    .product();
                jac[(row, k)] = m.scale * d1 * rest;
            }
        }
        Some(jac)
    }

    fn hessian(&self, u: &DVector<f64>) -> Option<Hessian> {
        let mut h = Hessian::zeros(self.coords.len(), self.n);
        for (row, m) in self.coords.iter().enumerate() {
            let jets = Self::factor_jets(m, u);
            for (a, &(ka, _, da1, da2)) in jets.iter().enumerate() {
                for (b, &(kb, _, db1, _)) in jets.iter().enumerate() {
                    let rest: f64 = jets
                        .iter()
                        .enumerate()
                        .filter(|&(c, _)| c != a && c != b)
                        .map(|(_, j)| j.1)
                        .product();
                    let d = if a == b { da2 } else { da1 * db1 };
                    h.slices[ka][(row, kb)] = m.scale * d * rest;
                }
            }
        }
        Some(h)
    }
}

/// Analytic Jacobian when the chart has one, central differences otherwise.
pub fn jacobian_or_fd(chart: &dyn ChartMap, u: &DVector<f64>) -> DMatrix<f64> {
    if let Some(j) = chart.jacobian(u) {
        return j;
    }
    let mut jac = DMatrix::zeros(chart.ambient_dim(), chart.intrinsic_dim());
    for i in 0..u.len() {
        let h = f64::EPSILON.cbrt() * u[i].abs().max(1.0);
        let mut up = u.clone();
        up[i] += h;
        let mut dn = u.clone();
        dn[i] -= h;
        let span = up[i] - dn[i];
        jac.set_column(i, &((chart.eval(&up) - chart.eval(&dn)) / span));
    }
    jac
}

/// Monomials of the hyperspherical parametrization of the unit sphere
/// `S^m` in `R^{m+1}` using parameters `first..first+m`:
/// `x_1 = cos t_1`, `x_2 = sin t_1 cos t_2`, ..., `x_{m+1} = sin t_1 ... sin t_m`.
/// With `m = 0` this is the single constant coordinate `1`.
pub fn unit_sphere_monomials(m: usize, first: usize) -> Vec<TrigMonomial> {
    (0..=m)
        .map(|k| {
            let mut factors: Vec<(usize, Trig)> = (0..k).map(|i| (first + i, Trig::Sin)).collect();
            if k < m {
                factors.push((first + k, Trig::Cos));
            }
            TrigMonomial { scale: 1.0, factors }
        })
        .collect()
}

/// Multiplies every monomial by `scale` and by the extra factors.
pub fn scaled(monomials: Vec<TrigMonomial>, scale: f64, extra: &[(usize, Trig)]) -> Vec<TrigMonomial> {
    monomials
        .into_iter()
        .map(|mut m| {
            m.scale *= scale;
            m.factors.extend_from_slice(extra);
            m
        })
        .collect()
}

/// Inverse of the hyperspherical parametrization on its regular part.
pub fn hyperspherical_angles(x: &DVector<f64>) -> DVector<f64> {
    let m = x.len() - 1;
    let mut angles = DVector::zeros(m);
    for k in 0..m {
        if k + 1 == m {
            angles[k] = x[m].atan2(x[m - 1]);
        } else {
            let tail = x.rows(k + 1, m - k).norm();
            angles[k] = tail.atan2(x[k]);
        }
    }
    angles
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_chart_lies_on_sphere() {
        let chart = TrigChart::new(3, scaled(unit_sphere_monomials(3, 0), 2.0, &[]));
        let u = DVector::from_vec(vec![0.4, 1.1, -2.0]);
        let x = chart.eval(&u);
        assert!((x.norm() - 2.0).abs() < 1e-14);
        let back = hyperspherical_angles(&x);
        assert!((back - u).amax() < 1e-13);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let chart = TrigChart::new(3, scaled(unit_sphere_monomials(3, 0), 1.5, &[]));
        let u = DVector::from_vec(vec![0.7, 0.9, 0.3]);
        let jac = chart.jacobian(&u).unwrap();
        let hes = chart.hessian(&u).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (chart.eval(&up) - chart.eval(&dn)) / (2.0 * h);
            assert!((fd - jac.column(i)).amax() < 1e-9);
            let fdj = (chart.jacobian(&up).unwrap() - chart.jacobian(&dn).unwrap()) / (2.0 * h);
            assert!((fdj - &hes.slices[i]).amax() < 1e-9);
        }
        assert!(hes.asymmetry() < 1e-15);
    }

    #[test]
    fn circle_second_derivative() {
        let chart = TrigChart::new(
            1,
            vec![
                TrigMonomial { scale: 1.0, factors: vec![(0, Trig::Cos)] },
                TrigMonomial { scale: 1.0, factors: vec![(0, Trig::Sin)] },
            ],
        );
        let u = DVector::from_vec(vec![0.0]);
        let jac = chart.jacobian(&u).unwrap();
        assert_eq!(jac.column(0).as_slice(), &[0.0, 1.0]);
        let h = chart.hessian(&u).unwrap();
        assert_eq!(h.second(0, 0).as_slice(), &[-1.0, 0.0]);
    }
}
