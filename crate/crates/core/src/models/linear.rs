use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::RngCore;

use super::{Gaussian, ObsMoments, StateSpaceModel};
use crate::error::{Error, Result};

/// `x_{t+1} = F x_t + c + N(0, Q)`, `y_t = H x_t + d + N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    prior: Gaussian,
    trans_matrix: DMatrix<f64>,
    trans_offset: DVector<f64>,
    noise: Gaussian,
    obs_matrix: DMatrix<f64>,
    obs_offset: DVector<f64>,
    obs_noise: Gaussian,
    obs_at_initial: bool,
}

impl LinearGaussianModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prior: Gaussian,
        trans_matrix: DMatrix<f64>,
        trans_offset: DVector<f64>,
        trans_cov: DMatrix<f64>,
        obs_matrix: DMatrix<f64>,
        obs_offset: DVector<f64>,
        obs_cov: DMatrix<f64>,
        obs_at_initial: bool,
    ) -> Result<Self> {
        let n = prior.dim();
        let m = obs_offset.len();
        if trans_matrix.shape() != (n, n) || trans_offset.len() != n {
            return Err(Error::Dimension("transition must be n x n with offset n".into()));
        }
        if m == 0 || obs_matrix.shape() != (m, n) {
            return Err(Error::Dimension("observation matrix must be m x n, m >= 1".into()));
        }
        if obs_cov.shape() != (m, m) {
            return Err(Error::Dimension("observation covariance must be m x m".into()));
        }
        Ok(Self {
            prior,
            trans_matrix,
            trans_offset,
            noise: Gaussian::zero_mean(trans_cov)?,
            obs_matrix,
            obs_offset,
            obs_noise: Gaussian::zero_mean(obs_cov)?,
            obs_at_initial,
        })
    }

    /// Scalar model `x' = f x + c + N(0, q)`, `y = h x + N(0, r)`, no initial observation.
    pub fn scalar(
        init_mean: f64,
        init_var: f64,
        f: f64,
        c: f64,
        q: f64,
        h: f64,
        r: f64,
    ) -> Result<Self> {
        Self::new(
            Gaussian::new(dvector![init_mean], dmatrix![init_var])?,
            dmatrix![f],
            dvector![c],
            dmatrix![q],
            dmatrix![h],
            dvector![0.0],
            dmatrix![r],
            false,
        )
    }

    pub fn with_obs_at_initial(mut self, flag: bool) -> Self {
        self.obs_at_initial = flag;
        self
    }

    pub fn trans_matrix(&self) -> &DMatrix<f64> {
        &self.trans_matrix
    }

    pub fn trans_offset(&self) -> &DVector<f64> {
        &self.trans_offset
    }

    pub fn obs_matrix(&self) -> &DMatrix<f64> {
        &self.obs_matrix
    }

    pub fn obs_offset(&self) -> &DVector<f64> {
        &self.obs_offset
    }

    pub fn obs_noise(&self) -> &Gaussian {
        &self.obs_noise
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_offset.len()
    }

    fn residual(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        y - &self.obs_matrix * x - &self.obs_offset
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type Obs = DVector<f64>;

    fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    fn prior(&self) -> &Gaussian {
        &self.prior
    }

    fn trans_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.trans_matrix * x + &self.trans_offset
    }

    fn trans_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.trans_matrix.clone()
    }

    fn trans_mean_hessian(&self, _x: &DVector<f64>, _k: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), self.state_dim())
    }

    fn trans_noise(&self) -> &Gaussian {
        &self.noise
    }

    fn log_obs(&self, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
        self.obs_noise.log_pdf(&self.residual(y, x))
    }

    fn log_obs_grad(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.obs_matrix.transpose() * (self.obs_noise.precision() * self.residual(y, x))
    }

    fn log_obs_hessian(&self, _y: &DVector<f64>, _x: &DVector<f64>) -> DMatrix<f64> {
        -(self.obs_matrix.transpose() * self.obs_noise.precision() * &self.obs_matrix)
    }

    fn obs_moments(&self, x: &DVector<f64>) -> ObsMoments {
        ObsMoments {
            mean: &self.obs_matrix * x + &self.obs_offset,
            jacobian: self.obs_matrix.clone(),
            cov: self.obs_noise.cov().clone(),
        }
    }

    fn obs_vector(&self, y: &DVector<f64>) -> DVector<f64> {
        y.clone()
    }

    fn obs_at_initial(&self) -> bool {
        self.obs_at_initial
    }

    fn sample_obs(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.obs_matrix * x + &self.obs_offset + self.obs_noise.sample(rng)
    }
}
