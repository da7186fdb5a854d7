//! Ridge-regularised normal equations shared by the DP, FQI and IRL fits.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{QlbsError, Result};

/// `X^T diag(w) X`, or `X^T X` when no weights are given.
pub fn gram(design: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    match weights {
        None => design.tr_mul(design),
        Some(w) => {
            let mut scaled = design.clone();
            for (mut row, wk) in scaled.row_iter_mut().zip(w) {
                row *= *wk;
            }
            scaled.tr_mul(design)
        }
    }
}

/// `X^T y`.
pub fn moment(design: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    design.tr_mul(&DVector::from_column_slice(y))
}

/// Solves `(G + eps I) beta = b` by Cholesky factorisation.
pub fn ridge_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
    let n = gram.nrows();
    let regularized = gram + DMatrix::<f64>::identity(n, n) * eps;
    if regularized.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(QlbsError::Numerical {
            step: None,
            msg: "non-finite entries in normal equations".into(),
        });
    }
    match Cholesky::new(regularized.clone()) {
        Some(chol) => Ok(chol.solve(rhs)),
        None => {
            let eig = regularized.symmetric_eigenvalues();
            let (lo, hi) = eig
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(*v), hi.max(v.abs())));
            Err(QlbsError::Numerical {
                step: None,
                msg: format!(
                    "regularised system is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}], condition ~{:.3e})",
                    hi / lo.abs().max(f64::MIN_POSITIVE)
                ),
            })
        }
    }
}

/// Ridge least squares of `y` on the columns of `design`.
pub fn ridge_fit(design: &DMatrix<f64>, y: &[f64], eps: f64) -> Result<DVector<f64>> {
    ridge_solve(&gram(design, None), &moment(design, y), eps)
}

/// Fitted values `X beta` as a plain vector.
pub fn predict(design: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (design * beta).iter().copied().collect()
}
