use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ndcore::Tensor;

/// Ridge added to the standardized Gram matrix.
pub const RIDGE_JITTER: f64 = 1e-8;

/// Standardized systems worse than this are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Least-squares fit with an intercept.
///
/// Columns are standardized before solving so the fixed jitter means the
/// same thing for every design; constant columns get a zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    /// One coefficient per input column, in raw units.
    pub coef: Vec<f64>,
    /// Condition estimate of the standardized, jittered Gram matrix.
    pub condition: f64,
}

impl LinearFit {
    pub fn fit(features: &Tensor, y: &[f64]) -> Result<LinearFit> {
        let (n, p) = (features.rows(), features.cols());
        if n != y.len() {
            return Err(Error::InvalidArgument(format!("{n} feature rows for {} targets", y.len())));
        }
        if n < 2 {
            return Err(Error::Estimation(format!("least squares needs at least 2 rows, got {n}")));
        }
        if !features.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimation("non-finite values in the regression design (condition number undefined)".into()));
        }
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(features.row_slice(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sd = vec![0.0; p];
        for i in 0..n {
            for ((s, v), m) in sd.iter_mut().zip(features.row_slice(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        sd.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
        let y_mean = y.iter().sum::<f64>() / n as f64;

        let z = DMatrix::from_fn(n, p, |i, j| {
            if sd[j] > 1e-12 {
                (features.get(i, j) - mean[j]) / sd[j]
            } else {
                0.0
            }
        });
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.tr_mul(&z) / n as f64;
        for j in 0..p {
            gram[(j, j)] += RIDGE_JITTER;
        }
        let rhs = z.tr_mul(&yc) / n as f64;
        let Some(chol) = gram.clone().cholesky() else {
            let eig = gram.symmetric_eigenvalues();
            let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
            return Err(Error::Estimation(format!(
                "design is rank deficient beyond jitter rescue (condition number {:.3e})",
                hi / lo
            )));
        };
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let condition = if p == 0 { 1.0 } else { (hi / lo).powi(2) };
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::Estimation(format!(
                "design is rank deficient beyond jitter rescue (condition number {condition:.3e})"
            )));
        }
        let beta = chol.solve(&rhs);
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Estimation(format!("least squares produced non-finite coefficients (condition number {condition:.3e})")));
        }
        let coef: Vec<f64> = (0..p).map(|j| if sd[j] > 1e-12 { beta[j] / sd[j] } else { 0.0 }).collect();
        let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(LinearFit { intercept, coef, condition })
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>> {
        if features.cols() != self.coef.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature columns, fit has {}",
                features.cols(),
                self.coef.len()
            )));
        }
        Ok((0..features.rows())
            .map(|i| self.intercept + features.row_slice(i).iter().zip(&self.coef).map(|(x, c)| x * c).sum::<f64>())
            .collect())
    }
}

/// Columns of `a` followed by columns of `b`.
pub fn hstack(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::InvalidArgument(format!("hstack of {} and {} rows", a.rows(), b.rows())));
    }
    let rows: Vec<Vec<f64>> = (0..a.rows())
        .map(|i| a.row_slice(i).iter().chain(b.row_slice(i)).copied().collect())
        .collect();
    Tensor::matrix(a.rows(), a.cols() + b.cols(), rows.concat())
}
