//! Approximate modal path (AMP) filter and smoother.
//!
//! The forward value function `psi_t` is carried as a [`QuadraticForm`]. One
//! step maximizes the two-block objective
//!
//! `v(x_t, x_{t+1}) = psi_t(x_t) + log N(x_{t+1}; f(x_t), Q) + log q(y_{t+1} | x_{t+1})`
//!
//! jointly, expands it to second order around that joint mode, and maximizes
//! the quadratic over `x_t` in closed form. The kept block becomes
//! `psi_{t+1}`; the eliminated block gives the affine map
//! `x_t = A x_{t+1} + b` that the smoother runs backwards from `m_T`.
//!
//! By default the transition log-density enters the expansion through its
//! Gauss-Newton curvature `J^T Q^-1 J` and the observation log-density through
//! its exact Hessian. On linear-Gaussian models every step is exact and the
//! filter and smoother reproduce the Kalman filter and RTS smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::models::{check_inputs, path_objective, ModalPath, StateSpaceModel};
use crate::optim::{maximize, LocalModel, NewtonConfig, NewtonDiagnostics};
use crate::quadratics::{repair_spd, AffineConditional, Block, JointQuadratic, QuadraticForm};

/// Curvature used for the transition term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianRule {
    /// `J^T Q^-1 J`, dropping second derivatives of the transition mean.
    #[default]
    GaussNewton,
    /// Exact second-order Taylor expansion of the transition term too.
    FullTaylor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub newton: NewtonConfig,
    pub hessian: HessianRule,
    /// Fail when the gradient tolerance is not reached within `max_iter`.
    pub require_convergence: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            hessian: HessianRule::GaussNewton,
            require_convergence: true,
        }
    }
}

impl AmpConfig {
    /// One Newton move from `(m_t, f(m_t))`, then expand wherever it lands.
    pub fn single_expansion() -> Self {
        Self {
            newton: NewtonConfig {
                max_iter: 1,
                ..NewtonConfig::default()
            },
            require_convergence: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardValueApprox {
    pub time_index: usize,
    pub quad: QuadraticForm,
}

impl ForwardValueApprox {
    /// The filter estimate (argmax of the approximate forward value).
    pub fn mode(&self) -> &DVector<f64> {
        self.quad.mode()
    }
}

/// Output of one AMP step from `t` to `t + 1`.
#[derive(Debug, Clone)]
pub struct AmpStepRecord {
    /// `t + 1`.
    pub time_index: usize,
    pub value_approx: ForwardValueApprox,
    /// `x_t` as an affine function of `x_{t+1}`.
    pub cond: AffineConditional,
    pub diagnostics: NewtonDiagnostics,
    pub converged: bool,
    /// The expansion curvature needed SPD repair.
    pub clamped: bool,
}

/// The two-block step objective `v(x_t, x_{t+1})`.
pub struct StepObjective<'a, M: StateSpaceModel + ?Sized> {
    value_approx: &'a QuadraticForm,
    model: &'a M,
    y: Option<&'a M::Obs>,
    rule: HessianRule,
}

pub fn build_step_objective<'a, M: StateSpaceModel + ?Sized>(
    value_approx: &'a ForwardValueApprox,
    model: &'a M,
    y: Option<&'a M::Obs>,
    rule: HessianRule,
) -> StepObjective<'a, M> {
    StepObjective {
        value_approx: &value_approx.quad,
        model,
        y,
        rule,
    }
}

impl<M: StateSpaceModel + ?Sized> StepObjective<'_, M> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn value(&self, x_t: &DVector<f64>, x_next: &DVector<f64>) -> f64 {
        let psi = self
            .value_approx
            .evaluate(x_t)
            .expect("state dimension matches the value approximation");
        let obs = self.y.map_or(0.0, |y| self.model.log_obs(y, x_next));
        psi + self.model.log_trans(x_next, x_t) + obs
    }

    /// Value, gradient and assembled negative Hessian at `z = [x_t; x_{t+1}]`.
    pub fn local(&self, z: &DVector<f64>) -> LocalModel {
        self.local_with(z, self.rule)
    }

    /// Local model driving the mode search: the exact Hessian where it is
    /// negative definite, the configured assembly elsewhere. Gauss-Newton
    /// curvature alone vanishes where the transition mean is flat, which
    /// makes the search crawl; the mode itself does not depend on this.
    pub fn search_local(&self, z: &DVector<f64>) -> LocalModel {
        let exact = self.local_with(z, HessianRule::FullTaylor);
        if self.rule == HessianRule::FullTaylor || exact.neg_hessian.clone().cholesky().is_some() {
            exact
        } else {
            self.local(z)
        }
    }

    fn local_with(&self, z: &DVector<f64>, rule: HessianRule) -> LocalModel {
        let d = self.dim();
        let a = z.rows(0, d).into_owned();
        let b = z.rows(d, d).into_owned();
        let model = self.model;
        let noise_prec = model.trans_noise().precision();
        let lambda = self.value_approx.precision();

        let jac = model.trans_jacobian(&a);
        let resid = &b - model.trans_mean(&a);
        let w = noise_prec * &resid;

        let grad_a = -(lambda * (&a - self.value_approx.mode())) + jac.transpose() * &w;
        let mut grad_b = -&w;
        let mut h_aa = lambda + jac.transpose() * noise_prec * &jac;
        let h_ab = -(jac.transpose() * noise_prec);
        let mut h_bb = noise_prec.clone();
        if rule == HessianRule::FullTaylor {
            for k in 0..d {
                h_aa -= model.trans_mean_hessian(&a, k) * w[k];
            }
        }
        if let Some(y) = self.y {
            grad_b += model.log_obs_grad(y, &b);
            h_bb -= model.log_obs_hessian(y, &b);
        }

        let mut grad = DVector::zeros(2 * d);
        grad.rows_mut(0, d).copy_from(&grad_a);
        grad.rows_mut(d, d).copy_from(&grad_b);
        let mut neg_hessian = DMatrix::zeros(2 * d, 2 * d);
        neg_hessian.view_mut((0, 0), (d, d)).copy_from(&h_aa);
        neg_hessian.view_mut((0, d), (d, d)).copy_from(&h_ab);
        neg_hessian.view_mut((d, 0), (d, d)).copy_from(&h_ab.transpose());
        neg_hessian.view_mut((d, d), (d, d)).copy_from(&h_bb);

        LocalModel {
            value: self.value(&a, &b),
            grad,
            neg_hessian,
        }
    }
}

/// Quadratic for `psi_0`: exact Gaussian prior, or a Laplace expansion of
/// prior plus `y_0` term at its mode.
pub fn amp_init<M: StateSpaceModel + ?Sized>(
    model: &M,
    y0: Option<&M::Obs>,
    config: &AmpConfig,
) -> Result<(ForwardValueApprox, Option<NewtonDiagnostics>)> {
    let prior = model.prior();
    let Some(y0) = y0 else {
        let quad = QuadraticForm::new(prior.log_norm(), prior.mean().clone(), prior.precision().clone())?;
        return Ok((ForwardValueApprox { time_index: 0, quad }, None));
    };
    let objective = |x: &DVector<f64>| LocalModel {
        value: model.log_init(x) + model.log_obs(y0, x),
        grad: model.log_init_grad(x) + model.log_obs_grad(y0, x),
        neg_hessian: -(model.log_init_hessian(x) + model.log_obs_hessian(y0, x)),
    };
    let out = maximize(objective, prior.mean().clone(), &config.newton, config.require_convergence)
        .map_err(|e| e.at_time(0))?;
    let (quad, clamped) =
        QuadraticForm::from_mode_and_hessian(out.x, out.local.value, &out.local.neg_hessian)?;
    let mut diagnostics = out.diagnostics;
    diagnostics.clamped |= clamped;
    Ok((ForwardValueApprox { time_index: 0, quad }, Some(diagnostics)))
}

pub fn amp_step<M: StateSpaceModel + ?Sized>(
    value_approx: &ForwardValueApprox,
    model: &M,
    y_next: Option<&M::Obs>,
    config: &AmpConfig,
) -> Result<AmpStepRecord> {
    let t_next = value_approx.time_index + 1;
    let d = model.state_dim();
    let objective = build_step_objective(value_approx, model, y_next, config.hessian);

    let m = value_approx.mode();
    let mut z0 = DVector::zeros(2 * d);
    z0.rows_mut(0, d).copy_from(m);
    z0.rows_mut(d, d).copy_from(&model.trans_mean(m));

    let out = maximize(|z| objective.search_local(z), z0, &config.newton, config.require_convergence)
        .map_err(|e| e.at_time(t_next))?;

    let expansion = objective.local(&out.x);
    let repaired = repair_spd(&expansion.neg_hessian)?;
    let joint = JointQuadratic::from_full(
        expansion.value,
        out.x.rows(0, d).into_owned(),
        out.x.rows(d, d).into_owned(),
        &repaired.matrix,
    )?;
    let (quad, cond) = joint.partial_maximize(Block::A)?;
    Ok(AmpStepRecord {
        time_index: t_next,
        value_approx: ForwardValueApprox {
            time_index: t_next,
            quad,
        },
        cond,
        diagnostics: out.diagnostics,
        converged: out.converged,
        clamped: repaired.clamped || out.diagnostics.clamped,
    })
}

/// Forward pass: `psi_0` followed by one record per time step.
#[derive(Debug, Clone)]
pub struct AmpFilter {
    pub initial: ForwardValueApprox,
    pub init_diagnostics: Option<NewtonDiagnostics>,
    pub steps: Vec<AmpStepRecord>,
}

impl AmpFilter {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn approximation(&self, t: usize) -> &ForwardValueApprox {
        if t == 0 {
            &self.initial
        } else {
            &self.steps[t - 1].value_approx
        }
    }

    pub fn approximations(&self) -> impl Iterator<Item = &ForwardValueApprox> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.value_approx))
    }

    pub fn means(&self) -> Vec<DVector<f64>> {
        self.approximations().map(|a| a.mode().clone()).collect()
    }
}

pub fn amp_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    config: &AmpConfig,
) -> Result<AmpFilter> {
    check_inputs(model, observations)?;
    let (initial, init_diagnostics) = amp_init(model, observations[0].as_ref(), config)?;
    let mut steps: Vec<AmpStepRecord> = Vec::with_capacity(observations.len() - 1);
    for y in &observations[1..] {
        let prev = steps.last().map_or(&initial, |s| &s.value_approx);
        let record = amp_step(prev, model, y.as_ref(), config)?;
        steps.push(record);
    }
    Ok(AmpFilter {
        initial,
        init_diagnostics,
        steps,
    })
}

/// Backward affine pass `x_t = A_t x_{t+1} + b_t` from `x_T = m_T`.
pub fn amp_smooth<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    filter: &AmpFilter,
) -> Result<ModalPath> {
    let horizon = filter.horizon();
    let mut states = vec![DVector::zeros(0); horizon + 1];
    states[horizon] = filter.approximation(horizon).mode().clone();
    for t in (0..horizon).rev() {
        states[t] = filter.steps[t].cond.apply(&states[t + 1])?;
    }
    let objective = path_objective(model, observations, &states)?;
    Ok(ModalPath { states, objective })
}

#[derive(Debug, Clone)]
pub struct AmpResult {
    pub filter_means: Vec<DVector<f64>>,
    pub filter_precisions: Vec<DMatrix<f64>>,
    pub smoothed_path: ModalPath,
    pub step_records: Vec<AmpStepRecord>,
}

pub fn run_amp<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    config: &AmpConfig,
) -> Result<AmpResult> {
    let filter = amp_filter(model, observations, config)?;
    let smoothed_path = amp_smooth(model, observations, &filter)?;
    Ok(AmpResult {
        filter_means: filter.means(),
        filter_precisions: filter.approximations().map(|a| a.quad.precision().clone()).collect(),
        smoothed_path,
        step_records: filter.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGaussianModel, RickerModel};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn ricker_init_is_exact_prior() {
        let m = RickerModel::default();
        let (psi, diag) = amp_init(&m, None, &AmpConfig::default()).unwrap();
        assert!(diag.is_none());
        assert_eq!(psi.mode()[0], 7f64.ln());
        assert_relative_eq!(psi.quad.precision()[(0, 0)], 100.0, max_relative = 1e-12);
        assert_relative_eq!(psi.quad.log_scale(), 1.383646559789373, epsilon = 1e-12);
    }

    #[test]
    fn init_with_linear_observation_is_scalar_posterior() {
        let m = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_obs_at_initial(true);
        let (psi, diag) = amp_init(&m, Some(&dvector![1.0]), &AmpConfig::default()).unwrap();
        assert!(diag.is_some());
        assert_relative_eq!(psi.mode()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(psi.quad.precision()[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn step_objective_substitution_identity() {
        let m = RickerModel::default();
        let (psi, _) = amp_init(&m, None, &AmpConfig::default()).unwrap();
        let y = 14u64;
        let obj = build_step_objective(&psi, &m, Some(&y), HessianRule::GaussNewton);
        let mt = psi.mode().clone();
        let fm = m.trans_mean(&mt);
        let expected = psi.quad.log_scale() + m.trans_noise().log_norm() + m.log_obs(&y, &fm);
        assert_relative_eq!(obj.value(&mt, &fm), expected, epsilon = 1e-12);

        let no_obs = build_step_objective(&psi, &m, None, HessianRule::GaussNewton);
        let (a, b) = (dvector![1.7], dvector![2.9]);
        assert_relative_eq!(
            no_obs.value(&a, &b),
            psi.quad.evaluate(&a).unwrap() + m.log_trans(&b, &a),
            epsilon = 1e-12
        );
    }

    #[test]
    fn step_gradient_matches_finite_differences() {
        let m = RickerModel::default();
        let (psi, _) = amp_init(&m, None, &AmpConfig::default()).unwrap();
        let y = 9u64;
        let obj = build_step_objective(&psi, &m, Some(&y), HessianRule::FullTaylor);
        let z = dvector![1.6, 2.4];
        let local = obj.local(&z);
        let h = 1e-5;
        for k in 0..2 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (obj.local(&zp).value - obj.local(&zm).value) / (2.0 * h);
            assert_relative_eq!(local.grad[k], fd, max_relative = 1e-6);
            for l in 0..2 {
                let fd2 = -(obj.local(&zp).grad[l] - obj.local(&zm).grad[l]) / (2.0 * h);
                assert_relative_eq!(local.neg_hessian[(l, k)], fd2, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn prediction_only_step_on_linear_model() {
        let m = LinearGaussianModel::scalar(0.3, 0.5, 0.8, 0.2, 0.4, 1.0, 1.0).unwrap();
        let (psi, _) = amp_init(&m, None, &AmpConfig::default()).unwrap();
        let rec = amp_step(&psi, &m, None, &AmpConfig::default()).unwrap();
        assert_relative_eq!(rec.value_approx.mode()[0], 0.8 * 0.3 + 0.2, epsilon = 1e-12);
    }

    #[test]
    fn step_postconditions_hold() {
        let m = RickerModel::default();
        let cfg = AmpConfig::default();
        let (psi, _) = amp_init(&m, None, &cfg).unwrap();
        let rec = amp_step(&psi, &m, Some(&30), &cfg).unwrap();
        assert!(rec.converged);
        assert!(!rec.clamped);
        assert!(rec.diagnostics.grad_norm <= cfg.newton.grad_tol);
        // the affine map sends the new mode back to the joint mode of x_t;
        // check that it is a stationary point of v in x_t
        let b = rec.value_approx.mode().clone();
        let a = rec.cond.apply(&b).unwrap();
        let obj = build_step_objective(&psi, &m, Some(&30), HessianRule::GaussNewton);
        let mut z = DVector::zeros(2);
        z[0] = a[0];
        z[1] = b[0];
        assert!(obj.local(&z).grad.amax() < 1e-8);
    }

    #[test]
    fn zero_horizon_filter_and_smoother() {
        let m = RickerModel::default();
        let res = run_amp(&m, &[None], &AmpConfig::default()).unwrap();
        assert_eq!(res.filter_means.len(), 1);
        assert_eq!(res.smoothed_path.states, vec![dvector![7f64.ln()]]);
    }

    #[test]
    fn single_expansion_config_runs() {
        let m = RickerModel::default();
        let obs = vec![None, Some(40), Some(3), Some(0), Some(90)];
        let res = run_amp(&m, &obs, &AmpConfig::single_expansion()).unwrap();
        assert!(res.step_records.iter().all(|r| r.diagnostics.iterations <= 1));
        assert!(res.smoothed_path.objective.is_finite());
    }
}
