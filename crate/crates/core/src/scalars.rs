//! Metallic numbers and the generalized secondary Fibonacci sequence.
//!
//! A metallic structure satisfies `J^2 = pJ + qI`. Its eigenvalues are the two
//! roots `sigma = (p + sqrt(p^2 + 4q)) / 2` and `sigma_bar = p - sigma` of the
//! characteristic polynomial `x^2 - px - q`, and its powers reduce to
//! `J^n = g_n J + q g_{n-1} I` where `g` is the sequence produced by
//! [`gen_fibonacci`].

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Integer parameters `(p, q)` together with the derived metallic scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetallicParams {
    pub p: u32,
    pub q: u32,
    pub sigma: f64,
    pub sigma_bar: f64,
    pub delta: f64,
}

impl MetallicParams {
    /// Builds the parameter set; `p` and `q` must be positive integers.
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if p <= 0 || q <= 0 {
            return Err(Error::Domain(format!(
                "metallic parameters must be positive integers, got p={p}, q={q}"
            )));
        }
        let p = u32::try_from(p).map_err(|_| Error::Domain(format!("p={p} too large")))?;
        let q = u32::try_from(q).map_err(|_| Error::Domain(format!("q={q} too large")))?;
        let (pf, qf) = (f64::from(p), f64::from(q));
        let delta = pf * pf + 4.0 * qf;
        let sigma = 0.5 * (pf + delta.sqrt());
        let sigma_bar = -qf / sigma;
        Ok(Self {
            p,
            q,
            sigma,
            sigma_bar,
            delta,
        })
    }

    pub fn golden() -> Self {
        Self::new(1, 1).expect("(1,1) is valid")
    }

    pub fn pf(&self) -> f64 {
        f64::from(self.p)
    }

    pub fn qf(&self) -> f64 {
        f64::from(self.q)
    }

    pub fn sqrt_delta(&self) -> f64 {
        self.delta.sqrt()
    }
}

/// Convenience wrapper matching the operation name used throughout the crate.
pub fn make_params(p: i64, q: i64) -> Result<MetallicParams> {
    MetallicParams::new(p, q)
}

/// Returns `[g_0, ..., g_n]` with `g_0 = 0`, `g_1 = 1`, `g_{k+1} = p g_k + q g_{k-1}`.
///
/// Values are exact while they stay below 2^53; for `p, q <= 5` that holds up
/// to `n = 20`, and the sequence stays finite well past `n = 64`.
pub fn gen_fibonacci(params: &MetallicParams, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n + 1);
    g.push(0.0);
    if n == 0 {
        return g;
    }
    g.push(1.0);
    for k in 1..n {
        let next = params.pf() * g[k] + params.qf() * g[k - 1];
        g.push(next);
    }
    g
}

/// Residual of `J^n = g_n J + q g_{n-1} I`.
///
/// The max-abs entry of the difference is divided by `max(1, max|J^n|)`, so
/// the value is absolute for small powers and relative once the entries of
/// `J^n` grow past one.
pub fn power_identity_residual(j: &DMatrix<f64>, params: &MetallicParams, n: usize) -> Result<f64> {
    if !j.is_square() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            found: j.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::Domain("power must be at least 1".into()));
    }
    let dim = j.nrows();
    let mut power = j.clone();
    for _ in 1..n {
        power = &power * j;
    }
    let g = gen_fibonacci(params, n);
    let reduced = j * g[n] + DMatrix::identity(dim, dim) * (params.qf() * g[n - 1]);
    let scale = power.amax().max(1.0);
    Ok((&power - reduced).amax() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_and_silver() {
        let g = MetallicParams::new(1, 1).unwrap();
        assert!((g.sigma - 1.618_033_988_7).abs() < 1e-10);
        assert!((g.sigma_bar + 0.618_033_988_7).abs() < 1e-10);
        assert!((g.sigma * g.sigma_bar + 1.0).abs() < 4.0 * f64::EPSILON);

        let s = MetallicParams::new(2, 1).unwrap();
        assert!((s.sigma - 2.414_213_562_4).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(MetallicParams::new(0, 1), Err(Error::Domain(_))));
        assert!(matches!(MetallicParams::new(1, -2), Err(Error::Domain(_))));
    }

    #[test]
    fn invariants_hold_on_grid() {
        for p in 1..=5 {
            for q in 1..=5 {
                let m = MetallicParams::new(p, q).unwrap();
                let eps = 4.0 * f64::EPSILON;
                assert_eq!(m.delta, (p * p + 4 * q) as f64);
                assert!((m.sigma * m.sigma - m.pf() * m.sigma - m.qf()).abs() <= eps * m.sigma * m.sigma);
                assert!((m.sigma * m.sigma_bar + m.qf()).abs() <= eps * m.qf());
                assert!((m.sigma + m.sigma_bar - m.pf()).abs() <= eps * m.sigma);
            }
        }
    }

    #[test]
    fn fibonacci_sequences() {
        let g = MetallicParams::new(1, 1).unwrap();
        assert_eq!(gen_fibonacci(&g, 6), vec![0.0, 1.0, 1.0, 2.0, 3.0, 5.0, 8.0]);
        let pell = MetallicParams::new(2, 1).unwrap();
        assert_eq!(gen_fibonacci(&pell, 5), vec![0.0, 1.0, 2.0, 5.0, 12.0, 29.0]);
        let m = MetallicParams::new(4, 3).unwrap();
        assert_eq!(gen_fibonacci(&m, 1), vec![0.0, 1.0]);
        assert_eq!(gen_fibonacci(&m, 0), vec![0.0]);
    }

    #[test]
    fn scalar_power_of_silver_mean() {
        // (1 + sqrt 2)^3 = 7 + 5 sqrt 2 = 5 sigma + 2
        let s = MetallicParams::new(2, 1).unwrap();
        let j = DMatrix::from_element(1, 1, s.sigma);
        let cube = s.sigma.powi(3);
        assert!((cube - (7.0 + 5.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!(power_identity_residual(&j, &s, 3).unwrap() < 1e-15);
        assert_eq!(power_identity_residual(&j, &s, 1).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_power_matches_direct_powering() {
        let g = MetallicParams::golden();
        let j = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![g.sigma, g.sigma_bar]));
        assert!(power_identity_residual(&j, &g, 5).unwrap() <= 1e-12);
    }

    #[test]
    fn non_square_is_rejected() {
        let j = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            power_identity_residual(&j, &MetallicParams::golden(), 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
