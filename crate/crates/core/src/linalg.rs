//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Spectral condition number of a symmetric matrix; infinite when singular.
pub fn condition_number_sym(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(a.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares solution of `x w = y` through the SVD (minimum-norm for rank-deficient `x`).
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if x.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max_sv * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, eps).expect("u and v were computed")
}

/// Columns of `x` selected by `idx`, in that order.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

/// Inverse of a symmetric positive definite matrix.
///
/// Returns the inverse and the ridge that had to be added to the diagonal
/// (zero when the matrix is well conditioned).
pub fn spd_inverse(a: &DMatrix<f64>, max_condition: f64, ridge: f64) -> (DMatrix<f64>, f64) {
    let n = a.nrows();
    if condition_number_sym(a) <= max_condition {
        if let Some(ch) = a.clone().cholesky() {
            return (ch.inverse(), 0.0);
        }
    }
    let mut jitter = ridge;
    loop {
        let shifted = a + DMatrix::identity(n, n) * jitter;
        if let Some(ch) = shifted.cholesky() {
            return (ch.inverse(), jitter);
        }
        jitter *= 10.0;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn condition_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 0.5]));
        assert_abs_diff_eq!(condition_number_sym(&a), 8.0, epsilon = 1e-12);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(condition_number_sym(&s) > 1e12);
    }

    #[test]
    fn lstsq_recovers_exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let w = lstsq(&x, &y);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_inverse_gets_ridge() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, ridge) = spd_inverse(&s, 1e12, 1e-8);
        assert!(ridge > 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let (inv, ridge) = spd_inverse(&a, 1e12, 1e-8);
        assert_eq!(ridge, 0.0);
        assert_abs_diff_eq!(inv[(1, 1)], 0.25, epsilon = 1e-15);
    }
}
