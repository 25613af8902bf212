//! Multivariate Gaussian density with a cached Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::features::FeatureVector;

const LOG_TAU: f64 = 1.8378770664093453; // ln(2*pi)

/// Frozen density: mean plus the Cholesky factor of the (regularized)
/// covariance, so evaluation is one triangular solve.
#[derive(Clone, Debug)]
pub struct MultivariateGaussian {
    mu: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl MultivariateGaussian {
    /// `sigma` must already include any diagonal regularization. Returns
    /// `None` when it is not positive definite.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Option<Self> {
        let dim = mu.len();
        if sigma.nrows() != dim || sigma.ncols() != dim {
            return None;
        }
        let chol = Cholesky::new(sigma)?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (dim as f64 * LOG_TAU + log_det);
        Some(MultivariateGaussian { mu, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.mu.len());
        let delta = DVector::from_row_slice(x) - &self.mu;
        let solved = self.chol.solve(&delta);
        self.log_norm - 0.5 * delta.dot(&solved)
    }
}

/// Two-pass sample mean and covariance with divisor `n`.
///
/// Panics if `samples` is empty or dimensions disagree; callers validate.
pub fn fit_mean_cov(samples: &[FeatureVector]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len();
    assert!(n > 0);
    let d = samples[0].len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        assert_eq!(s.len(), d);
        mean += DVector::from_row_slice(s);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let delta = DVector::from_row_slice(s) - &mean;
        cov += &delta * delta.transpose();
    }
    cov /= n as f64;
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_normal_density_at_mean() {
        let g = MultivariateGaussian::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        // -log(1/sqrt(2*pi)) = 0.5*ln(2*pi)
        assert_relative_eq!(-g.log_density(&[0.0]), 0.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn mean_cov_two_points() {
        let (mu, cov) = fit_mean_cov(&[vec![0.0], vec![2.0]]);
        assert_relative_eq!(mu[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(cov[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_indefinite_sigma() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MultivariateGaussian::new(DVector::zeros(2), sigma).is_none());
    }
}
