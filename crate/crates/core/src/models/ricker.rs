use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::RngCore;

use super::{ln_factorial, sample_poisson, Gaussian, ObsMoments, StateSpaceModel};
use crate::error::{Error, Result};

/// Stochastic Ricker map on the log-population scale with Poisson counts:
///
/// `x_0 ~ N(init_mean, init_sd^2)`,
/// `x_{t+1} = x_t - exp(x_t) + log_growth + N(0, trans_sd^2)`,
/// `y_t ~ Poisson(rate_multiplier * exp(x_t))`.
#[derive(Debug, Clone)]
pub struct RickerModel {
    log_growth: f64,
    rate_multiplier: f64,
    obs_at_initial: bool,
    prior: Gaussian,
    noise: Gaussian,
}

impl Default for RickerModel {
    fn default() -> Self {
        Self::new(7f64.ln(), 0.1, 44.7f64.ln(), 0.3, 2.0, false)
            .expect("default Ricker parameters are valid")
    }
}

impl RickerModel {
    pub fn new(
        init_mean: f64,
        init_sd: f64,
        log_growth: f64,
        trans_sd: f64,
        rate_multiplier: f64,
        obs_at_initial: bool,
    ) -> Result<Self> {
        if !(init_sd > 0.0 && trans_sd > 0.0 && rate_multiplier > 0.0) {
            return Err(Error::Contract(
                "Ricker standard deviations and rate multiplier must be positive".into(),
            ));
        }
        if !(init_mean.is_finite() && log_growth.is_finite()) {
            return Err(Error::Contract("Ricker parameters must be finite".into()));
        }
        Ok(Self {
            log_growth,
            rate_multiplier,
            obs_at_initial,
            prior: Gaussian::new(dvector![init_mean], dmatrix![init_sd * init_sd])?,
            noise: Gaussian::zero_mean(dmatrix![trans_sd * trans_sd])?,
        })
    }

    pub fn with_obs_at_initial(mut self, flag: bool) -> Self {
        self.obs_at_initial = flag;
        self
    }

    pub fn log_growth(&self) -> f64 {
        self.log_growth
    }

    pub fn rate_multiplier(&self) -> f64 {
        self.rate_multiplier
    }

    fn rate(&self, x: f64) -> f64 {
        self.rate_multiplier * x.exp()
    }

    fn log_obs_scalar(&self, y: u64, x: f64) -> f64 {
        let yf = y as f64;
        yf * (self.rate_multiplier.ln() + x) - self.rate(x) - ln_factorial(y)
    }
}

/// Poisson log-pmf at rate `2 e^x`: `y (log 2 + x) - 2 e^x - log y!`.
pub fn ricker_log_obs(y: i64, x: f64) -> Result<f64> {
    if y < 0 {
        return Err(Error::Contract(format!("count must be nonnegative, got {y}")));
    }
    let yf = y as f64;
    Ok(yf * (2f64.ln() + x) - 2.0 * x.exp() - ln_factorial(y as u64))
}

impl StateSpaceModel for RickerModel {
    type Obs = u64;

    fn state_dim(&self) -> usize {
        1
    }

    fn prior(&self) -> &Gaussian {
        &self.prior
    }

    fn trans_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        dvector![x[0] - x[0].exp() + self.log_growth]
    }

    fn trans_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        dmatrix![1.0 - x[0].exp()]
    }

    fn trans_mean_hessian(&self, x: &DVector<f64>, _k: usize) -> DMatrix<f64> {
        dmatrix![-x[0].exp()]
    }

    fn trans_noise(&self) -> &Gaussian {
        &self.noise
    }

    fn log_obs(&self, y: &u64, x: &DVector<f64>) -> f64 {
        self.log_obs_scalar(*y, x[0])
    }

    fn log_obs_grad(&self, y: &u64, x: &DVector<f64>) -> DVector<f64> {
        dvector![*y as f64 - self.rate(x[0])]
    }

    fn log_obs_hessian(&self, _y: &u64, x: &DVector<f64>) -> DMatrix<f64> {
        dmatrix![-self.rate(x[0])]
    }

    fn obs_moments(&self, x: &DVector<f64>) -> ObsMoments {
        let lambda = self.rate(x[0]);
        ObsMoments {
            mean: dvector![lambda],
            jacobian: dmatrix![lambda],
            cov: dmatrix![lambda],
        }
    }

    fn obs_vector(&self, y: &u64) -> DVector<f64> {
        dvector![*y as f64]
    }

    fn obs_at_initial(&self) -> bool {
        self.obs_at_initial
    }

    fn sample_obs(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> u64 {
        sample_poisson(self.rate(x[0]), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::trial_rng;
    use approx::assert_relative_eq;

    #[test]
    fn log_obs_examples() {
        assert_relative_eq!(ricker_log_obs(0, -20.0).unwrap(), -2.0 * (-20f64).exp(), max_relative = 1e-12);
        assert!(ricker_log_obs(0, -20.0).unwrap() < 0.0);
        assert_relative_eq!(ricker_log_obs(3, 0.0).unwrap(), -1.7123179275482191, epsilon = 1e-12);
        assert_relative_eq!(ricker_log_obs(2, 0.0).unwrap(), 2f64.ln() - 2.0, epsilon = 1e-12);
        assert!(matches!(ricker_log_obs(-1, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn log_obs_matches_direct_pmf() {
        let m = RickerModel::default();
        for y in 0..=20u64 {
            let mut fact = 1.0f64;
            for k in 2..=y {
                fact *= k as f64;
            }
            for i in 0..=12 {
                let x = -3.0 + 0.5 * i as f64;
                let lambda = 2.0 * f64::exp(x);
                let pmf = lambda.powi(y as i32) * (-lambda).exp() / fact;
                assert!((m.log_obs(&y, &dvector![x]) - pmf.ln()).abs() <= 1e-10, "y={y} x={x}");
            }
        }
    }

    #[test]
    fn transition_mean_formula() {
        let m = RickerModel::default();
        let x = 1.3;
        assert_eq!(m.trans_mean(&dvector![x])[0], x - x.exp() + 44.7f64.ln());
    }

    #[test]
    fn observation_mean_matches_rate() {
        let m = RickerModel::default();
        let x = dvector![1.0];
        let mut rng = trial_rng(3, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| m.sample_obs(&x, &mut rng) as f64).sum::<f64>() / n as f64;
        let lambda = 2.0 * 1f64.exp();
        assert!((mean - lambda).abs() < 3.0 * (lambda / n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RickerModel::new(0.0, 0.0, 1.0, 0.3, 2.0, false).is_err());
        assert!(RickerModel::new(0.0, 0.1, f64::NAN, 0.3, 2.0, false).is_err());
    }
}
