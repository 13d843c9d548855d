//! Small dense helpers shared by the frame and decomposition code.

use nalgebra::{DMatrix, DVector};

/// Orthonormalizes the columns of `a` in order (modified Gram-Schmidt, two
/// passes). Returns `Q` and the upper-triangular `R` with positive diagonal,
/// or `None` when a column is dependent on its predecessors.
pub fn thin_qr(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (rows, cols) = a.shape();
    let mut q = DMatrix::<f64>::zeros(rows, cols);
    let mut r = DMatrix::<f64>::zeros(cols, cols);
    for j in 0..cols {
        let mut v = a.column(j).clone_owned();
        let norm0 = v.norm();
        for _pass in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                r[(i, j)] += c;
                v.axpy(-c, &q.column(i), 1.0);
            }
        }
        let nv = v.norm();
        if nv <= 1e-14 * norm0.max(f64::MIN_POSITIVE) || nv == 0.0 {
            return None;
        }
        r[(j, j)] = nv;
        q.set_column(j, &(v / nv));
    }
    Some((q, r))
}

/// Removes from `v` its components along the (orthonormal) columns of `basis`, twice.
pub fn orthogonalize_against(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _pass in 0..2 {
        for b in basis {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
        }
    }
}

/// Max-abs entry, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// `E E^T` for a matrix with orthonormal columns.
pub fn projector(e: &DMatrix<f64>) -> DMatrix<f64> {
    e * e.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 0.0, 1.0]);
        let (q, r) = thin_qr(&a).unwrap();
        assert!((&q * &r - &a).amax() < 1e-14);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0 && r[(1, 0)] == 0.0);
    }

    #[test]
    fn qr_rejects_dependent_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(thin_qr(&a).is_none());
    }
}
