//! Modal (maximum a posteriori) path estimation for partially observed
//! Markov processes.
//!
//! * [`grid`]: exact forward/backward dynamic programming on a 1-D grid.
//! * [`amp`]: the quadratic-approximation modal path filter and smoother.
//! * [`baselines`]: Kalman-Laplace and iterated Taylor posterior-linearization
//!   filters with an RTS-style smoother.
//! * [`models`]: the stochastic Ricker map and linear-Gaussian models.

pub mod amp;
pub mod baselines;
pub mod error;
pub mod grid;
pub mod kalman;
pub mod models;
pub mod optim;
pub mod quadratics;

pub use error::{Error, Result};
pub use models::{
    path_objective, simulate, trial_rng, Gaussian, LinearGaussianModel, ModalPath, RickerModel,
    ShiftedObs, StateSpaceModel, Trajectory,
};
pub use quadratics::{AffineConditional, Block, JointQuadratic, QuadraticForm};
