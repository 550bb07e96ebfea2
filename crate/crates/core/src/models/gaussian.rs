use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quadratics::{check_symmetric, cholesky, symmetrize};

/// Multivariate normal with cached Cholesky factor and precision.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || cov.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "covariance {:?} does not match mean length {n}",
                cov.shape()
            )));
        }
        check_symmetric(&cov, "covariance")?;
        let chol = cholesky(&cov, "covariance")?;
        let chol_lower = chol.l();
        let log_det: f64 = 2.0 * chol_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = symmetrize(&chol.inverse());
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            cov,
            chol_lower,
            precision,
            log_norm,
        })
    }

    pub fn zero_mean(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `log N(x; mean, cov)`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        self.log_norm - 0.5 * d.dot(&(&self.precision * &d))
    }

    pub fn log_pdf_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.precision * (x - &self.mean))
    }

    /// Log density at the mean.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.chol_lower * z
    }
}
