//! Oracle suites behind `bench validate`: linear-Gaussian exactness against
//! the Kalman filter, grid recursion equivalences and finite-difference
//! derivative checks.

use modalpath::amp::{run_amp, AmpConfig};
use modalpath::baselines::{iplf_filter, iplf_smooth, klf_filter, klf_smooth};
use modalpath::grid::{combined_optimum, two_filter_mode, GridTables, StateGrid};
use modalpath::kalman::{kalman_filter, rts_smoother};
use modalpath::optim::NewtonConfig;
use modalpath::{simulate, trial_rng, Gaussian, LinearGaussianModel, RickerModel, StateSpaceModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{BenchError, Result};

fn std_normal_matrix(rows: usize, cols: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let unit = Gaussian::zero_mean(DMatrix::identity(rows * cols, rows * cols)).expect("identity is SPD");
    DMatrix::from_column_slice(rows, cols, unit.sample(rng).as_slice())
}

fn random_spd(n: usize, scale: f64, floor: f64, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let a = std_normal_matrix(n, n, rng) * scale;
    let m = &a * a.transpose() + DMatrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

/// Random linear-Gaussian model with transition operator norm below 0.95.
pub fn random_stable_lgssm(dim: usize, rng: &mut dyn RngCore) -> LinearGaussianModel {
    let obs_dim = rng.random_range(1..=dim);
    let svd = std_normal_matrix(dim, dim, rng).svd(true, true);
    let singular = DVector::from_fn(dim, |_, _| rng.random_range(0.2..0.95));
    let f = svd.u.expect("u") * DMatrix::from_diagonal(&singular) * svd.v_t.expect("v_t");
    let c = std_normal_matrix(dim, 1, rng).column(0) * 0.3;
    let h = std_normal_matrix(obs_dim, dim, rng);
    let d = std_normal_matrix(obs_dim, 1, rng).column(0) * 0.3;
    let prior = Gaussian::new(
        std_normal_matrix(dim, 1, rng).column(0).into_owned(),
        random_spd(dim, 0.5, 0.5, rng),
    )
    .expect("SPD prior");
    LinearGaussianModel::new(
        prior,
        f,
        c.into_owned(),
        random_spd(dim, 0.4, 0.2, rng),
        h,
        d.into_owned(),
        random_spd(obs_dim, 0.4, 0.3, rng),
        false,
    )
    .expect("consistent dimensions")
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest element-wise deviations from the Kalman filter / RTS smoother.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDeviation {
    pub amp_filter_mean: f64,
    pub amp_filter_precision: f64,
    pub amp_smoother: f64,
    pub klf: f64,
    pub iplf: f64,
}

impl LinearDeviation {
    pub fn within(&self, amp_tol: f64, baseline_tol: f64) -> bool {
        self.amp_filter_mean <= amp_tol
            && self.amp_filter_precision <= amp_tol
            && self.amp_smoother <= amp_tol
            && self.klf <= baseline_tol
            && self.iplf <= baseline_tol
    }
}

pub fn linear_deviation(
    model: &LinearGaussianModel,
    observations: &[Option<DVector<f64>>],
) -> Result<LinearDeviation> {
    let kf = kalman_filter(model, observations)?;
    let rts = rts_smoother(model, &kf)?;
    let amp = run_amp(model, observations, &AmpConfig::default())?;

    let mut dev = LinearDeviation {
        amp_filter_mean: 0.0,
        amp_filter_precision: 0.0,
        amp_smoother: 0.0,
        klf: 0.0,
        iplf: 0.0,
    };
    for t in 0..kf.len() {
        dev.amp_filter_mean = dev
            .amp_filter_mean
            .max(max_abs_diff(amp.filter_means[t].iter(), kf[t].mean.iter()));
        let kf_prec = kf[t]
            .cov
            .clone()
            .try_inverse()
            .ok_or_else(|| BenchError::Validation("singular Kalman covariance".into()))?;
        dev.amp_filter_precision = dev
            .amp_filter_precision
            .max(max_abs_diff(amp.filter_precisions[t].iter(), kf_prec.iter()));
        dev.amp_smoother = dev
            .amp_smoother
            .max(max_abs_diff(amp.smoothed_path.states[t].iter(), rts[t].mean.iter()));
    }
    let klf = klf_filter(model, observations, &NewtonConfig::default())?;
    let klf_s = klf_smooth(model, &klf)?;
    let iplf = iplf_filter(model, observations, 3)?;
    let iplf_s = iplf_smooth(model, &iplf)?;
    for t in 0..kf.len() {
        dev.klf = dev
            .klf
            .max(max_abs_diff(klf.beliefs[t].mean.iter(), kf[t].mean.iter()))
            .max(max_abs_diff(klf_s.smoothed[t].mean.iter(), rts[t].mean.iter()));
        dev.iplf = dev
            .iplf
            .max(max_abs_diff(iplf.beliefs[t].mean.iter(), kf[t].mean.iter()))
            .max(max_abs_diff(iplf_s.smoothed[t].mean.iter(), rts[t].mean.iter()));
    }
    Ok(dev)
}

/// Agreement of the grid recursions on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAgreement {
    pub forward_path: Vec<usize>,
    pub backward_path: Vec<usize>,
    pub brute_path: Vec<usize>,
    pub two_filter_path: Vec<usize>,
    /// Spread of `max [psi_t + V_t]` over `t`, and distance to the brute optimum.
    pub value_spread: f64,
    pub brute_value_gap: f64,
}

impl GridAgreement {
    pub fn paths_agree(&self) -> bool {
        self.forward_path == self.backward_path
            && self.forward_path == self.brute_path
            && self.forward_path == self.two_filter_path
    }
}

pub fn grid_agreement<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
) -> Result<GridAgreement> {
    let tables = GridTables::build(model, observations, grid)?;
    let fv = tables.forward_values();
    let bv = tables.backward_values();
    let horizon = tables.horizon();
    let forward_path = tables.forward_modal_indices(&bv)?;
    let backward_path = tables.backward_modal_indices(&fv)?;
    let (brute_path, brute_value) = tables.brute_force_indices()?;
    let two_filter_path = (0..=horizon)
        .map(|t| two_filter_mode(&fv, &bv, t))
        .collect::<modalpath::Result<Vec<_>>>()?;
    let optima: Vec<f64> = (0..=horizon).map(|t| combined_optimum(&fv[t], &bv[t])).collect();
    let hi = optima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = optima.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GridAgreement {
        forward_path,
        backward_path,
        brute_path,
        two_filter_path,
        value_spread: hi - lo,
        brute_value_gap: (optima[0] - brute_value).abs(),
    })
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let failed: Vec<_> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            Err(BenchError::Validation(failed.join(", ")))
        }
    }
}

/// Linear-Gaussian exactness and grid-recursion equivalence on seeded
/// random instances.
pub fn validate(seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    for k in 0..6u64 {
        let mut rng = trial_rng(seed, k);
        let dim = 1 + (k as usize % 3);
        let model = random_stable_lgssm(dim, &mut rng);
        let traj = simulate(&model, 50, &mut rng)?;
        let dev = linear_deviation(&model, &traj.observations)?;
        report.checks.push(CheckOutcome {
            name: format!("lgssm-exactness[{k}] dim={dim}"),
            passed: dev.within(1e-10, 1e-8),
            detail: format!("{dev:?}"),
        });
    }
    let ricker = RickerModel::default();
    for k in 0..6u64 {
        let mut rng = trial_rng(seed ^ 0x9e37_79b9, k);
        let horizon = 2 + (k as usize % 3);
        let n = [15, 31, 61][k as usize % 3];
        let agreement = if k % 2 == 0 {
            let traj = simulate(&ricker, horizon, &mut rng)?;
            grid_agreement(&ricker, &traj.observations, &StateGrid::uniform(-4.0, 5.0, n)?)?
        } else {
            let model = random_stable_lgssm(1, &mut rng);
            let traj = simulate(&model, horizon, &mut rng)?;
            grid_agreement(&model, &traj.observations, &StateGrid::uniform(-6.0, 6.0, n)?)?
        };
        report.checks.push(CheckOutcome {
            name: format!("grid-equivalence[{k}] n={n} T={horizon}"),
            passed: agreement.paths_agree()
                && agreement.value_spread <= 1e-10
                && agreement.brute_value_gap <= 1e-10,
            detail: format!(
                "spread={:.3e} gap={:.3e}",
                agreement.value_spread, agreement.brute_value_gap
            ),
        });
    }
    for (name, err) in derivative_suite(seed, 20)? {
        report.checks.push(CheckOutcome {
            passed: err <= 1e-5,
            detail: format!("max rel err {err:.3e}"),
            name: format!("derivative: {name}"),
        });
    }
    Ok(report)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian(g: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let rows = g(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        jac.set_column(i, &((g(&up) - g(&down)) / (2.0 * h)));
    }
    jac
}

/// Largest `|analytic - fd| / max(|fd|, 1)` over all entries.
pub fn relative_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(fd.iter())
        .fold(0.0_f64, |m, (a, f)| m.max((a - f).abs() / f.abs().max(1.0)))
}

fn col(v: DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_column_slice(n, 1, v.as_slice())
}

/// Worst finite-difference mismatch per analytic derivative, `probes` points each.
pub fn derivative_suite(seed: u64, probes: usize) -> Result<Vec<(String, f64)>> {
    use modalpath::amp::{build_step_objective, ForwardValueApprox, HessianRule};

    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, err: f64| match worst.iter_mut().find(|(n, _)| n == name) {
        Some(entry) => entry.1 = entry.1.max(err),
        None => worst.push((name.to_string(), err)),
    };
    let ricker = RickerModel::default();
    let mut rng = trial_rng(seed, 0);
    for _ in 0..probes {
        let x = DVector::from_element(1, rng.random_range(-3.0..4.0));
        let y: u64 = rng.random_range(0..60);
        check_model("ricker", &ricker, &y, &x, &mut record);
    }
    for dim in 1..=3 {
        let mut rng = trial_rng(seed, dim as u64);
        let model = random_stable_lgssm(dim, &mut rng);
        for _ in 0..probes {
            let x = std_normal_matrix(dim, 1, &mut rng).column(0) * 2.0;
            let y = std_normal_matrix(model.obs_dim(), 1, &mut rng).column(0).into_owned();
            check_model("lgssm", &model, &y, &x.into_owned(), &mut record);
        }
    }

    // two-block step objective on the Ricker map
    let mut rng = trial_rng(seed, 7);
    for _ in 0..probes {
        let mode = DVector::from_element(1, rng.random_range(-2.0..3.0));
        let prec = DMatrix::from_element(1, 1, rng.random_range(0.5..20.0));
        let psi = ForwardValueApprox {
            time_index: 0,
            quad: modalpath::QuadraticForm::new(0.0, mode, prec)?,
        };
        let y: u64 = rng.random_range(0..60);
        let z = DVector::from_vec(vec![rng.random_range(-3.0..4.0), rng.random_range(-3.0..4.0)]);
        let obj = build_step_objective(&psi, &ricker, Some(&y), HessianRule::FullTaylor);
        let local = obj.local(&z);
        let fd = fd_gradient(|z| obj.local(z).value, &z);
        record("step objective gradient", relative_error(&col(local.grad.clone()), &col(fd)));
        let fd_h = -fd_jacobian(|z| obj.local(z).grad, &z);
        record("step objective Hessian", relative_error(&local.neg_hessian, &fd_h));
    }
    Ok(worst)
}

fn check_model<M: StateSpaceModel>(
    kind: &str,
    model: &M,
    y: &M::Obs,
    x: &DVector<f64>,
    record: &mut impl FnMut(&str, f64),
) {
    let name = |what: &str| format!("{kind} {what}");
    let g = model.log_obs_grad(y, x);
    let fd = fd_gradient(|x| model.log_obs(y, x), x);
    record(&name("log_obs gradient"), relative_error(&col(g), &col(fd)));
    let fd_h = fd_jacobian(|x| model.log_obs_grad(y, x), x);
    record(&name("log_obs Hessian"), relative_error(&model.log_obs_hessian(y, x), &fd_h));
    let fd_j = fd_jacobian(|x| model.trans_mean(x), x);
    record(&name("transition Jacobian"), relative_error(&model.trans_jacobian(x), &fd_j));
    for k in 0..model.state_dim() {
        let fd_k = fd_jacobian(|x| model.trans_jacobian(x).row(k).transpose(), x);
        record(&name("transition mean Hessian"), relative_error(&model.trans_mean_hessian(x, k), &fd_k));
    }
    let fd_i = fd_gradient(|x| model.log_init(x), x);
    record(&name("log_init gradient"), relative_error(&col(model.log_init_grad(x)), &col(fd_i)));
    let fd_ih = fd_jacobian(|x| model.log_init_grad(x), x);
    record(&name("log_init Hessian"), relative_error(&model.log_init_hessian(x), &fd_ih));
    let fd_m = fd_jacobian(|x| model.obs_moments(x).mean, x);
    record(&name("observation mean Jacobian"), relative_error(&model.obs_moments(x).jacobian, &fd_m));
}
