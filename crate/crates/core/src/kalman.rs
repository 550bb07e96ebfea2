//! Covariance-form Kalman filter and RTS smoother for linear-Gaussian models.
//!
//! Reference implementation used to check the other estimators on the
//! linear case; it shares no code path with them.

use nalgebra::{DMatrix, DVector};

use crate::baselines::GaussianBelief;
use crate::error::{Error, Result};
use crate::models::{LinearGaussianModel, StateSpaceModel};

pub fn kalman_filter(
    model: &LinearGaussianModel,
    observations: &[Option<DVector<f64>>],
) -> Result<Vec<GaussianBelief>> {
    if observations.is_empty() {
        return Err(Error::Contract("need at least one observation slot".into()));
    }
    let f = model.trans_matrix();
    let h = model.obs_matrix();
    let r = model.obs_noise().cov();
    let n = model.state_dim();
    let mut out: Vec<GaussianBelief> = Vec::with_capacity(observations.len());
    for (t, y) in observations.iter().enumerate() {
        let (mut mean, mut cov) = if t == 0 {
            (model.prior().mean().clone(), model.prior().cov().clone())
        } else {
            let prev = &out[t - 1];
            (
                f * &prev.mean + model.trans_offset(),
                f * &prev.cov * f.transpose() + model.trans_noise().cov(),
            )
        };
        if let Some(y) = y {
            let s = h * &cov * h.transpose() + r;
            let s_inv = s
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
            let k = &cov * h.transpose() * s_inv;
            mean = &mean + &k * (y - h * &mean - model.obs_offset());
            let i_kh = DMatrix::identity(n, n) - &k * h;
            cov = &i_kh * &cov * i_kh.transpose() + &k * r * k.transpose();
        }
        out.push(GaussianBelief { mean, cov });
    }
    Ok(out)
}

pub fn rts_smoother(model: &LinearGaussianModel, filtered: &[GaussianBelief]) -> Result<Vec<GaussianBelief>> {
    let f = model.trans_matrix();
    let mut smoothed = filtered.to_vec();
    for t in (0..filtered.len().saturating_sub(1)).rev() {
        let cur = &filtered[t];
        let pred_mean = f * &cur.mean + model.trans_offset();
        let pred_cov = f * &cur.cov * f.transpose() + model.trans_noise().cov();
        let pred_inv = pred_cov
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("predicted covariance".into()))?;
        let g = &cur.cov * f.transpose() * pred_inv;
        let mean = &cur.mean + &g * (&smoothed[t + 1].mean - pred_mean);
        let cov = &cur.cov + &g * (&smoothed[t + 1].cov - pred_cov) * g.transpose();
        smoothed[t] = GaussianBelief { mean, cov };
    }
    Ok(smoothed)
}
