//! Seeded trials and per-time-step error quantiles.

use modalpath::amp::{run_amp, AmpConfig};
use modalpath::baselines::{iplf_filter, iplf_smooth, klf_filter, klf_smooth, IPLF_DEFAULT_ITERATIONS};
use modalpath::grid::{
    map_filter_on_grid, two_filter_mode, GridTables, StateGrid,
};
use modalpath::optim::NewtonConfig;
use modalpath::{simulate, trial_rng, LinearGaussianModel, RickerModel, StateSpaceModel};
use rayon::prelude::*;

use crate::config::{BenchConfig, Method, ModelKind};
use crate::error::{BenchError, Result};
use crate::stats::quantile;

/// Default linear-Gaussian benchmark model (scalar, no `y_0`).
pub fn default_lgssm() -> LinearGaussianModel {
    LinearGaussianModel::scalar(0.0, 1.0, 0.9, 0.0, 0.25, 1.0, 0.5).expect("valid parameters")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrial {
    pub method: Method,
    pub filter_est: Vec<f64>,
    pub smooth_est: Vec<f64>,
    pub filter_err: Vec<f64>,
    pub smooth_err: Vec<f64>,
    /// Set when the method failed on this trial; estimates are then NaN.
    pub error: Option<String>,
}

impl MethodTrial {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub truth: Vec<f64>,
    pub methods: Vec<MethodTrial>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.methods.iter().any(MethodTrial::failed)
    }

    pub fn method(&self, m: Method) -> Option<&MethodTrial> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Filter,
    Smoother,
}

impl Stage {
    pub fn id(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Smoother => "smoother",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub method: Method,
    pub stage: Stage,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSummary {
    pub horizon: usize,
    pub methods: Vec<Method>,
    /// Ordered by `t`, then method (config order), then filter before smoother.
    pub rows: Vec<SummaryRow>,
    pub included_trials: usize,
    pub failed_trials: usize,
}

impl QuantileSummary {
    pub fn series(&self, method: Method, stage: Stage) -> impl Iterator<Item = &SummaryRow> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.stage == stage)
    }

    /// Time average of the median series.
    pub fn mean_median(&self, method: Method, stage: Stage) -> f64 {
        mean(self.series(method, stage).map(|r| r.median))
    }

    /// Time average of the 90% quantile series.
    pub fn mean_q90(&self, method: Method, stage: Stage) -> f64 {
        mean(self.series(method, stage).map(|r| r.q90))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Outcome of the reduced-horizon grid cross-check on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCheckRow {
    pub trial: usize,
    pub horizon: usize,
    pub recursions_agree: bool,
    pub grid_objective: f64,
    pub amp_objective: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub trials: Vec<TrialResult>,
    pub summary: QuantileSummary,
    pub grid_check: Option<Vec<GridCheckRow>>,
}

/// Estimator settings shared by every trial.
#[derive(Debug, Clone, Copy)]
pub struct MethodSettings {
    pub amp: AmpConfig,
    pub newton: NewtonConfig,
    pub iplf_iterations: usize,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            amp: AmpConfig::default(),
            newton: NewtonConfig::default(),
            iplf_iterations: IPLF_DEFAULT_ITERATIONS,
        }
    }
}

/// Filter and smoother estimates (first state component) for one method.
pub fn run_method<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    method: Method,
    settings: &MethodSettings,
) -> modalpath::Result<(Vec<f64>, Vec<f64>)> {
    let first = |v: &nalgebra::DVector<f64>| v[0];
    match method {
        Method::Amp => {
            let res = run_amp(model, observations, &settings.amp)?;
            Ok((
                res.filter_means.iter().map(first).collect(),
                res.smoothed_path.states.iter().map(first).collect(),
            ))
        }
        Method::Klf => {
            let f = klf_filter(model, observations, &settings.newton)?;
            let s = klf_smooth(model, &f)?;
            Ok((
                f.beliefs.iter().map(|b| b.mean[0]).collect(),
                s.smoothed.iter().map(|b| b.mean[0]).collect(),
            ))
        }
        Method::Iplf => {
            let f = iplf_filter(model, observations, settings.iplf_iterations)?;
            let s = iplf_smooth(model, &f)?;
            Ok((
                f.beliefs.iter().map(|b| b.mean[0]).collect(),
                s.smoothed.iter().map(|b| b.mean[0]).collect(),
            ))
        }
    }
}

/// Simulate one trial and run every method on it.
pub fn run_trial<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &BenchConfig,
    settings: &MethodSettings,
    trial: usize,
) -> Result<TrialResult> {
    let mut rng = trial_rng(config.master_seed, trial as u64);
    let traj = simulate(model, config.horizon, &mut rng)?;
    let truth: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
    let abs_err = |est: &[f64]| est.iter().zip(&truth).map(|(e, x)| (e - x).abs()).collect::<Vec<_>>();
    let methods = config
        .methods
        .iter()
        .map(|&method| match run_method(model, &traj.observations, method, settings) {
            Ok((filter_est, smooth_est)) => {
                let all_finite = filter_est.iter().chain(&smooth_est).all(|v| v.is_finite());
                MethodTrial {
                    method,
                    filter_err: abs_err(&filter_est),
                    smooth_err: abs_err(&smooth_est),
                    filter_est,
                    smooth_est,
                    error: (!all_finite).then(|| "non-finite estimate".to_string()),
                }
            }
            Err(e) => {
                let nan = vec![f64::NAN; truth.len()];
                MethodTrial {
                    method,
                    filter_est: nan.clone(),
                    smooth_est: nan.clone(),
                    filter_err: nan.clone(),
                    smooth_err: nan,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(TrialResult {
        trial,
        truth,
        methods,
    })
}

/// Per-time-step median and 10%/90% quantiles over the trials in which no
/// method failed.
pub fn summarize(trials: &[TrialResult], methods: &[Method], horizon: usize) -> QuantileSummary {
    let included: Vec<&TrialResult> = trials.iter().filter(|t| !t.failed()).collect();
    let mut rows = Vec::with_capacity((horizon + 1) * methods.len() * 2);
    for t in 0..=horizon {
        for &method in methods {
            for stage in [Stage::Filter, Stage::Smoother] {
                let values: Vec<f64> = included
                    .iter()
                    .filter_map(|tr| tr.method(method))
                    .map(|m| match stage {
                        Stage::Filter => m.filter_err[t],
                        Stage::Smoother => m.smooth_err[t],
                    })
                    .collect();
                let q = |p| quantile(&values, p).unwrap_or(f64::NAN);
                rows.push(SummaryRow {
                    t,
                    method,
                    stage,
                    median: q(0.5),
                    q10: q(0.1),
                    q90: q(0.9),
                });
            }
        }
    }
    QuantileSummary {
        horizon,
        methods: methods.to_vec(),
        rows,
        included_trials: included.len(),
        failed_trials: trials.len() - included.len(),
    }
}

/// Grid used by the cross-check for each model.
pub fn check_grid(model: ModelKind) -> StateGrid {
    match model {
        ModelKind::Ricker => StateGrid::uniform(-4.0, 5.0, 61),
        ModelKind::Lgssm => StateGrid::uniform(-5.0, 5.0, 61),
    }
    .expect("valid grid")
}

/// Horizon of the grid cross-check: short enough for exhaustive search.
pub const GRID_CHECK_HORIZON: usize = 4;

/// Trials covered by the grid cross-check.
pub const GRID_CHECK_TRIALS: usize = 10;

fn grid_check_trial<M: StateSpaceModel + ?Sized>(
    model: &M,
    grid: &StateGrid,
    config: &BenchConfig,
    settings: &MethodSettings,
    trial: usize,
) -> Result<GridCheckRow> {
    let horizon = config.horizon.min(GRID_CHECK_HORIZON);
    let mut rng = trial_rng(config.master_seed, trial as u64);
    let traj = simulate(model, horizon, &mut rng)?;
    let obs = &traj.observations;
    let tables = GridTables::build(model, obs, grid)?;
    let (fv, bv) = (tables.forward_values(), tables.backward_values());
    let fwd = tables.forward_modal_indices(&bv)?;
    let bwd = tables.backward_modal_indices(&fv)?;
    let (brute, _) = tables.brute_force_indices()?;
    let two_filter = (0..=horizon)
        .map(|t| two_filter_mode(&fv, &bv, t))
        .collect::<modalpath::Result<Vec<_>>>()?;
    let filter = map_filter_on_grid(&fv);
    let recursions_agree = fwd == bwd && fwd == brute && fwd == two_filter && filter[horizon] == fwd[horizon];
    let states: Vec<_> = fwd
        .iter()
        .map(|&i| nalgebra::DVector::from_element(1, grid.points()[i]))
        .collect();
    let grid_objective = modalpath::path_objective(model, obs, &states)?;
    let amp_objective = run_amp(model, obs, &settings.amp)
        .map(|r| r.smoothed_path.objective)
        .unwrap_or(f64::NAN);
    Ok(GridCheckRow {
        trial,
        horizon,
        recursions_agree,
        grid_objective,
        amp_objective,
    })
}

fn run_with_model<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &BenchConfig,
    settings: &MethodSettings,
) -> Result<BenchOutput> {
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(model, config, settings, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&trials, &config.methods, config.horizon);
    let grid_check = if config.grid_check {
        let grid = check_grid(config.model);
        Some(
            (0..config.trials.min(GRID_CHECK_TRIALS))
                .into_par_iter()
                .map(|i| grid_check_trial(model, &grid, config, settings, i))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(BenchOutput {
        trials,
        summary,
        grid_check,
    })
}

fn thread_count(config: &BenchConfig) -> Result<Option<usize>> {
    if let Some(n) = config.threads {
        return Ok(Some(n));
    }
    match std::env::var("BENCH_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(BenchError::Config(format!("BENCH_THREADS must be a positive integer, got '{s}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Run every trial of `config` with default estimator settings.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchOutput> {
    run_benchmark_with(config, &MethodSettings::default())
}

pub fn run_benchmark_with(config: &BenchConfig, settings: &MethodSettings) -> Result<BenchOutput> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(config)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match config.model {
        ModelKind::Ricker => run_with_model(&RickerModel::default(), config, settings),
        ModelKind::Lgssm => run_with_model(&default_lgssm(), config, settings),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ModelKind) -> BenchConfig {
        BenchConfig {
            model,
            horizon: 16,
            trials: 4,
            master_seed: 9,
            threads: Some(2),
            ..Default::default()
        }
    }

    #[test]
    fn errors_are_recomputable_and_quantiles_ordered() {
        let out = run_benchmark(&small(ModelKind::Ricker)).unwrap();
        for tr in &out.trials {
            assert_eq!(tr.truth.len(), 17);
            for m in &tr.methods {
                for t in 0..=16 {
                    assert_eq!(m.filter_err[t], (m.filter_est[t] - tr.truth[t]).abs());
                    assert_eq!(m.smooth_err[t], (m.smooth_est[t] - tr.truth[t]).abs());
                }
            }
        }
        assert_eq!(out.summary.rows.len(), 17 * 3 * 2);
        for r in &out.summary.rows {
            assert!(r.q10 <= r.median && r.median <= r.q90);
        }
    }

    #[test]
    fn linear_model_methods_coincide() {
        let out = run_benchmark(&small(ModelKind::Lgssm)).unwrap();
        for tr in &out.trials {
            let amp = tr.method(Method::Amp).unwrap();
            for m in &tr.methods {
                for t in 0..=16 {
                    assert!((m.filter_est[t] - amp.filter_est[t]).abs() <= 1e-8);
                    assert!((m.smooth_est[t] - amp.smooth_est[t]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn failed_trials_are_excluded() {
        let ok = MethodTrial {
            method: Method::Amp,
            filter_est: vec![1.0, 1.0],
            smooth_est: vec![1.0, 1.0],
            filter_err: vec![0.5, 0.5],
            smooth_err: vec![0.5, 0.5],
            error: None,
        };
        let bad = MethodTrial {
            filter_err: vec![f64::NAN; 2],
            error: Some("boom".into()),
            ..ok.clone()
        };
        let trials = vec![
            TrialResult { trial: 0, truth: vec![0.5, 0.5], methods: vec![ok] },
            TrialResult { trial: 1, truth: vec![0.5, 0.5], methods: vec![bad] },
        ];
        let s = summarize(&trials, &[Method::Amp], 1);
        assert_eq!(s.failed_trials, 1);
        assert_eq!(s.included_trials, 1);
        assert!(s.rows.iter().all(|r| r.median == 0.5));
    }

    #[test]
    fn grid_check_agrees() {
        let cfg = BenchConfig {
            grid_check: true,
            trials: 2,
            ..small(ModelKind::Ricker)
        };
        let out = run_benchmark(&cfg).unwrap();
        let rows = out.grid_check.unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.recursions_agree));
    }
}
