//! Gaussian-belief baseline filters and an RTS-style smoother.
//!
//! Both filters use the EKF prediction `m- = f(m)`, `P- = J P J^T + Q` with
//! `J` the transition Jacobian at the filtered mean. They differ in the
//! measurement update:
//!
//! * **KLF** (Kalman-Laplace): the posterior mean is the mode of
//!   `log N(x; m-, P-) + log q(y | x)` found by damped Newton, and the
//!   posterior covariance is `(P-^-1 - d2/dx2 log q(y | x*))^-1`.
//! * **IPLF** (iterated posterior linearization, first-order Taylor variant):
//!   the observation is replaced by the linear-Gaussian surrogate
//!   `y ~ N(h(x_i) + H (x - x_i), Omega(x_i))`, where `h` and `Omega` are the
//!   conditional mean and covariance of `y` given `x` and `H` is the Jacobian
//!   of `h`, all taken at the linearization point `x_i`. A Kalman update with
//!   the surrogate gives the next linearization point; iteration stops after
//!   the pass budget or when the mean moves by at most `1e-9`.
//!
//! For Poisson counts with rate `lambda(x) = 2 e^x` the surrogate reads
//! `h = H = Omega = lambda(x_i)`. Dividing by `lambda(x_i)` shows it is the
//! log-rate pseudo-observation `z = x_i + (y - lambda(x_i)) / lambda(x_i)` of
//! `x` with noise variance `1 / lambda(x_i)`, the inverse of the negative
//! log-likelihood curvature at the linearization point.
//!
//! The smoother is the RTS backward pass with transition Jacobians evaluated
//! at the filtered means; it never changes the terminal belief.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{check_inputs, StateSpaceModel};
use crate::optim::{maximize, LocalModel, NewtonConfig};
use crate::quadratics::{cholesky, repair_spd, spd_inverse};

/// IPLF mean-change stopping threshold.
pub const IPLF_TOL: f64 = 1e-9;

/// Default IPLF pass budget.
pub const IPLF_DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterDiagnostics {
    /// Covariances that needed SPD repair.
    pub repairs: usize,
    /// Update iterations per time step.
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub beliefs: Vec<GaussianBelief>,
    pub diagnostics: FilterDiagnostics,
}

impl FilterOutput {
    pub fn means(&self) -> Vec<DVector<f64>> {
        self.beliefs.iter().map(|b| b.mean.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub filtered: Vec<GaussianBelief>,
    pub smoothed: Vec<GaussianBelief>,
    pub repairs: usize,
}

fn repaired_cov(cov: &DMatrix<f64>, repairs: &mut usize) -> Result<DMatrix<f64>> {
    let r = repair_spd(cov)?;
    *repairs += r.clamped as usize;
    Ok(r.matrix)
}

fn predict<M: StateSpaceModel + ?Sized>(
    model: &M,
    belief: &GaussianBelief,
    repairs: &mut usize,
) -> Result<GaussianBelief> {
    let jac = model.trans_jacobian(&belief.mean);
    let cov = &jac * &belief.cov * jac.transpose() + model.trans_noise().cov();
    Ok(GaussianBelief {
        mean: model.trans_mean(&belief.mean),
        cov: repaired_cov(&cov, repairs)?,
    })
}

fn prior_belief<M: StateSpaceModel + ?Sized>(model: &M) -> GaussianBelief {
    GaussianBelief {
        mean: model.prior().mean().clone(),
        cov: model.prior().cov().clone(),
    }
}

fn laplace_update<M: StateSpaceModel + ?Sized>(
    model: &M,
    pred: &GaussianBelief,
    y: &M::Obs,
    newton: &NewtonConfig,
    diag: &mut FilterDiagnostics,
) -> Result<GaussianBelief> {
    let pred_prec = spd_inverse(&pred.cov, "predicted covariance")?;
    let objective = |x: &DVector<f64>| {
        let d = x - &pred.mean;
        LocalModel {
            value: -0.5 * d.dot(&(&pred_prec * &d)) + model.log_obs(y, x),
            grad: -(&pred_prec * &d) + model.log_obs_grad(y, x),
            neg_hessian: &pred_prec - model.log_obs_hessian(y, x),
        }
    };
    let out = maximize(objective, pred.mean.clone(), newton, true)?;
    diag.iterations.push(out.diagnostics.iterations);
    let post_prec = repair_spd(&out.local.neg_hessian)?;
    diag.repairs += post_prec.clamped as usize;
    let cov = repaired_cov(&spd_inverse(&post_prec.matrix, "posterior precision")?, &mut diag.repairs)?;
    Ok(GaussianBelief { mean: out.x, cov })
}

fn iterated_taylor_update<M: StateSpaceModel + ?Sized>(
    model: &M,
    pred: &GaussianBelief,
    y: &M::Obs,
    iterations: usize,
    diag: &mut FilterDiagnostics,
) -> Result<GaussianBelief> {
    let yv = model.obs_vector(y);
    let n = pred.mean.len();
    let mut lin_point = pred.mean.clone();
    let mut post = None;
    let mut passes = 0;
    for _ in 0..iterations {
        passes += 1;
        let mom = model.obs_moments(&lin_point);
        let h = &mom.jacobian;
        let s = h * &pred.cov * h.transpose() + &mom.cov;
        let s_chol = cholesky(&s, "innovation covariance")?;
        // K = P- H^T S^-1
        let gain = s_chol.solve(&(h * &pred.cov)).transpose();
        let innovation = &yv - &mom.mean - h * (&pred.mean - &lin_point);
        let mean = &pred.mean + &gain * innovation;
        if mean.iter().any(|v| !v.is_finite()) {
            // keep the last finite linearization
            break;
        }
        let i_kh = DMatrix::identity(n, n) - &gain * h;
        let cov = &i_kh * &pred.cov * i_kh.transpose() + &gain * &mom.cov * gain.transpose();
        let moved = (&mean - &lin_point).amax();
        lin_point = mean.clone();
        post = Some(GaussianBelief { mean, cov });
        if moved <= IPLF_TOL {
            break;
        }
    }
    diag.iterations.push(passes);
    let post = post.ok_or_else(|| {
        Error::DegenerateCurvature("linearized update produced no finite estimate".into())
    })?;
    Ok(GaussianBelief {
        cov: repaired_cov(&post.cov, &mut diag.repairs)?,
        mean: post.mean,
    })
}

fn run_filter<M, U>(model: &M, observations: &[Option<M::Obs>], mut update: U) -> Result<FilterOutput>
where
    M: StateSpaceModel + ?Sized,
    U: FnMut(&GaussianBelief, &M::Obs, &mut FilterDiagnostics) -> Result<GaussianBelief>,
{
    check_inputs(model, observations)?;
    let mut diag = FilterDiagnostics::default();
    let mut beliefs = Vec::with_capacity(observations.len());
    let mut current = prior_belief(model);
    for (t, y) in observations.iter().enumerate() {
        if t > 0 {
            current = predict(model, &current, &mut diag.repairs)?;
        }
        if let Some(y) = y {
            current = update(&current, y, &mut diag).map_err(|e| e.at_time(t))?;
        } else {
            diag.iterations.push(0);
        }
        beliefs.push(current.clone());
    }
    Ok(FilterOutput {
        beliefs,
        diagnostics: diag,
    })
}

/// Kalman-Laplace filter.
pub fn klf_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    newton: &NewtonConfig,
) -> Result<FilterOutput> {
    run_filter(model, observations, |pred, y, diag| {
        laplace_update(model, pred, y, newton, diag)
    })
}

/// Iterated first-order Taylor posterior-linearization filter.
pub fn iplf_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    iterations: usize,
) -> Result<FilterOutput> {
    if iterations == 0 {
        return Err(Error::Contract("IPLF needs at least one iteration".into()));
    }
    run_filter(model, observations, |pred, y, diag| {
        iterated_taylor_update(model, pred, y, iterations, diag)
    })
}

/// RTS backward pass with transition Jacobians at the filtered means.
pub fn rts_smooth<M: StateSpaceModel + ?Sized>(model: &M, filtered: &[GaussianBelief]) -> Result<SmootherOutput> {
    let Some(last) = filtered.last() else {
        return Err(Error::Contract("empty filter output".into()));
    };
    let mut repairs = 0;
    let mut smoothed = vec![last.clone(); filtered.len()];
    for t in (0..filtered.len() - 1).rev() {
        let f = &filtered[t];
        let jac = model.trans_jacobian(&f.mean);
        let pred_cov = repaired_cov(&(&jac * &f.cov * jac.transpose() + model.trans_noise().cov()), &mut repairs)?;
        let pred_chol = cholesky(&pred_cov, "predicted covariance")?;
        // G = P J^T (P-)^-1
        let gain = pred_chol.solve(&(&jac * &f.cov)).transpose();
        let next = &smoothed[t + 1];
        let mean = &f.mean + &gain * (&next.mean - model.trans_mean(&f.mean));
        let cov = &f.cov + &gain * (&next.cov - &pred_cov) * gain.transpose();
        smoothed[t] = GaussianBelief {
            mean,
            cov: repaired_cov(&cov, &mut repairs)?,
        };
    }
    Ok(SmootherOutput {
        filtered: filtered.to_vec(),
        smoothed,
        repairs,
    })
}

pub fn klf_smooth<M: StateSpaceModel + ?Sized>(model: &M, filter: &FilterOutput) -> Result<SmootherOutput> {
    rts_smooth(model, &filter.beliefs)
}

pub fn iplf_smooth<M: StateSpaceModel + ?Sized>(model: &M, filter: &FilterOutput) -> Result<SmootherOutput> {
    rts_smooth(model, &filter.beliefs)
}
