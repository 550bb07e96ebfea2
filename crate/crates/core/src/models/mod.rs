//! Partially observed Markov processes with Gaussian transitions.
//!
//! The hidden chain is `x_0 ~ N(m0, P0)`, `x_{t+1} | x_t ~ N(f(x_t), Q)`, and
//! each observed index carries `y_t | x_t ~ q(y_t | x_t)`. Observation
//! sequences are indexed like the states: entry `t` holds `y_t`, and `None`
//! marks an index without an observation (always the case for `t = 0` when
//! the model does not observe the initial state).

mod gaussian;
mod linear;
mod poisson;
mod ricker;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use gaussian::Gaussian;
pub use linear::LinearGaussianModel;
pub use poisson::{ln_factorial, sample_poisson};
pub use ricker::{ricker_log_obs, RickerModel};

/// Conditional moments `E[y | x]`, its Jacobian and `Cov[y | x]`.
#[derive(Debug, Clone)]
pub struct ObsMoments {
    pub mean: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

pub trait StateSpaceModel: Sync {
    type Obs: Clone + Send + Sync + std::fmt::Debug;

    fn state_dim(&self) -> usize;

    /// Gaussian law of `x_0`.
    fn prior(&self) -> &Gaussian;

    fn trans_mean(&self, x: &DVector<f64>) -> DVector<f64>;

    fn trans_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Hessian of the `k`-th component of the transition mean.
    fn trans_mean_hessian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64>;

    /// Zero-mean transition noise `N(0, Q)`.
    fn trans_noise(&self) -> &Gaussian;

    fn log_obs(&self, y: &Self::Obs, x: &DVector<f64>) -> f64;

    fn log_obs_grad(&self, y: &Self::Obs, x: &DVector<f64>) -> DVector<f64>;

    fn log_obs_hessian(&self, y: &Self::Obs, x: &DVector<f64>) -> DMatrix<f64>;

    /// Conditional moments of the observation, used by moment-linearizing
    /// filters.
    fn obs_moments(&self, x: &DVector<f64>) -> ObsMoments;

    fn obs_vector(&self, y: &Self::Obs) -> DVector<f64>;

    /// Whether simulation draws an observation at `t = 0`.
    fn obs_at_initial(&self) -> bool;

    fn sample_obs(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> Self::Obs;

    fn log_init(&self, x: &DVector<f64>) -> f64 {
        self.prior().log_pdf(x)
    }

    fn log_init_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.prior().log_pdf_grad(x)
    }

    fn log_init_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        -self.prior().precision()
    }

    /// `log N(x_next; f(x), Q)`.
    fn log_trans(&self, x_next: &DVector<f64>, x: &DVector<f64>) -> f64 {
        self.trans_noise().log_pdf(&(x_next - self.trans_mean(x)))
    }

    fn sample_init(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        self.prior().sample(rng)
    }

    fn sample_trans(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        self.trans_mean(x) + self.trans_noise().sample(rng)
    }
}

/// Wraps a model and adds a constant to its observation log-density.
///
/// Estimators driven by modes and curvatures must not notice the shift.
#[derive(Debug, Clone)]
pub struct ShiftedObs<M> {
    pub inner: M,
    pub shift: f64,
}

impl<M: StateSpaceModel> StateSpaceModel for ShiftedObs<M> {
    type Obs = M::Obs;

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn prior(&self) -> &Gaussian {
        self.inner.prior()
    }
    fn trans_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.trans_mean(x)
    }
    fn trans_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.trans_jacobian(x)
    }
    fn trans_mean_hessian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        self.inner.trans_mean_hessian(x, k)
    }
    fn trans_noise(&self) -> &Gaussian {
        self.inner.trans_noise()
    }
    fn log_obs(&self, y: &Self::Obs, x: &DVector<f64>) -> f64 {
        self.inner.log_obs(y, x) + self.shift
    }
    fn log_obs_grad(&self, y: &Self::Obs, x: &DVector<f64>) -> DVector<f64> {
        self.inner.log_obs_grad(y, x)
    }
    fn log_obs_hessian(&self, y: &Self::Obs, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.log_obs_hessian(y, x)
    }
    fn obs_moments(&self, x: &DVector<f64>) -> ObsMoments {
        self.inner.obs_moments(x)
    }
    fn obs_vector(&self, y: &Self::Obs) -> DVector<f64> {
        self.inner.obs_vector(y)
    }
    fn obs_at_initial(&self) -> bool {
        self.inner.obs_at_initial()
    }
    fn sample_obs(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> Self::Obs {
        self.inner.sample_obs(x, rng)
    }
}

/// A state trajectory together with its log unnormalized posterior value.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalPath {
    pub states: Vec<DVector<f64>>,
    pub objective: f64,
}

impl ModalPath {
    /// Scalar view of a 1-D path.
    pub fn scalar_states(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[0]).collect()
    }
}

/// Simulated hidden states and observations, both of length `T + 1`.
#[derive(Debug, Clone)]
pub struct Trajectory<O> {
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<Option<O>>,
}

impl<O> Trajectory<O> {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

pub(crate) fn check_inputs<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::Contract(
            "observation sequence must have length T + 1 >= 1".into(),
        ));
    }
    if model.state_dim() == 0 {
        return Err(Error::Contract("state dimension must be positive".into()));
    }
    Ok(())
}

/// Log unnormalized posterior of `path` given `observations`:
/// `log p0(x_0) + log q(y_0|x_0) + sum_t [log p(x_t | x_{t-1}) + log q(y_t | x_t)]`,
/// with observation terms only at observed indices.
pub fn path_objective<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    path: &[DVector<f64>],
) -> Result<f64> {
    check_inputs(model, observations)?;
    if path.len() != observations.len() {
        return Err(Error::Contract(format!(
            "path has {} states but there are {} observation slots",
            path.len(),
            observations.len()
        )));
    }
    if let Some(bad) = path.iter().find(|x| x.len() != model.state_dim()) {
        return Err(Error::Dimension(format!(
            "state of length {} in a model of dimension {}",
            bad.len(),
            model.state_dim()
        )));
    }
    let mut total = model.log_init(&path[0]);
    if let Some(y) = &observations[0] {
        total += model.log_obs(y, &path[0]);
    }
    for t in 1..path.len() {
        total += model.log_trans(&path[t], &path[t - 1]);
        if let Some(y) = &observations[t] {
            total += model.log_obs(y, &path[t]);
        }
    }
    Ok(total)
}

/// Draw a trajectory of horizon `horizon` (so `horizon + 1` states).
pub fn simulate<M: StateSpaceModel + ?Sized>(
    model: &M,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<Trajectory<M::Obs>> {
    if horizon == 0 {
        return Err(Error::Contract("simulation horizon must be >= 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    let x0 = model.sample_init(rng);
    observations.push(model.obs_at_initial().then(|| model.sample_obs(&x0, rng)));
    states.push(x0);
    for t in 1..=horizon {
        let x = model.sample_trans(&states[t - 1], rng);
        observations.push(Some(model.sample_obs(&x, rng)));
        states.push(x);
    }
    Ok(Trajectory {
        states,
        observations,
    })
}

/// Independent stream for one trial: seeded with `master_seed ^ trial`.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed ^ trial)
}
