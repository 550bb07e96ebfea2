//! Python bindings: models, the AMP / KLF / IPLF estimators, exact grid
//! modal paths and the Ricker benchmark.

use std::path::PathBuf;

use modalpath::amp::{run_amp, AmpConfig};
use modalpath::baselines::{iplf_filter, iplf_smooth, klf_filter, klf_smooth, IPLF_DEFAULT_ITERATIONS};
use modalpath::grid::{brute_force_modal_path, GridTables, StateGrid};
use modalpath::optim::NewtonConfig;
use modalpath::{simulate, trial_rng, StateSpaceModel};
use modalpath_bench::runner::Stage;
use modalpath_bench::{emit_csv, emit_plot, parse_methods, BenchConfig, ModelKind};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "RickerModel", module = "modalpath", skip_from_py_object)]
#[derive(Clone)]
struct PyRicker {
    inner: modalpath::RickerModel,
}

#[pymethods]
impl PyRicker {
    #[new]
    #[pyo3(signature = (
        init_mean = 7f64.ln(),
        init_sd = 0.1,
        log_growth = 44.7f64.ln(),
        trans_sd = 0.3,
        rate_multiplier = 2.0,
        obs_at_initial = false
    ))]
    fn new(
        init_mean: f64,
        init_sd: f64,
        log_growth: f64,
        trans_sd: f64,
        rate_multiplier: f64,
        obs_at_initial: bool,
    ) -> PyResult<Self> {
        let inner = modalpath::RickerModel::new(init_mean, init_sd, log_growth, trans_sd, rate_multiplier, obs_at_initial)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// `(states, observations)` for one seeded trial; missing observations are `None`.
    #[pyo3(signature = (horizon, seed, trial = 0))]
    fn simulate(&self, horizon: usize, seed: u64, trial: u64) -> PyResult<(Vec<f64>, Vec<Option<u64>>)> {
        let traj = simulate(&self.inner, horizon, &mut trial_rng(seed, trial)).map_err(to_py)?;
        Ok((traj.states.iter().map(|x| x[0]).collect(), traj.observations))
    }

    fn log_obs(&self, y: u64, x: f64) -> f64 {
        self.inner.log_obs(&y, &DVector::from_element(1, x))
    }

    fn trans_mean(&self, x: f64) -> f64 {
        self.inner.trans_mean(&DVector::from_element(1, x))[0]
    }
}

#[pyclass(name = "LinearGaussianModel", module = "modalpath", skip_from_py_object)]
#[derive(Clone)]
struct PyLinear {
    inner: modalpath::LinearGaussianModel,
}

#[pymethods]
impl PyLinear {
    /// Scalar model `x' = f x + c + N(0, q)`, `y = h x + N(0, r)`.
    #[staticmethod]
    #[pyo3(signature = (init_mean, init_var, f, c, q, h, r, obs_at_initial = false))]
    #[allow(clippy::too_many_arguments)]
    fn scalar(init_mean: f64, init_var: f64, f: f64, c: f64, q: f64, h: f64, r: f64, obs_at_initial: bool) -> PyResult<Self> {
        let inner = modalpath::LinearGaussianModel::scalar(init_mean, init_var, f, c, q, h, r)
            .map_err(to_py)?
            .with_obs_at_initial(obs_at_initial);
        Ok(Self { inner })
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    /// `(states, observations)` as nested lists; missing observations are `None`.
    #[pyo3(signature = (horizon, seed, trial = 0))]
    #[allow(clippy::type_complexity)]
    fn simulate(&self, horizon: usize, seed: u64, trial: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Option<Vec<f64>>>)> {
        let traj = simulate(&self.inner, horizon, &mut trial_rng(seed, trial)).map_err(to_py)?;
        Ok((
            traj.states.iter().map(|x| x.iter().copied().collect()).collect(),
            traj.observations
                .iter()
                .map(|y| y.as_ref().map(|v| v.iter().copied().collect()))
                .collect(),
        ))
    }
}

#[pyclass(name = "QuadraticForm", module = "modalpath", skip_from_py_object)]
#[derive(Clone)]
struct PyQuadratic {
    inner: modalpath::QuadraticForm,
}

#[pymethods]
impl PyQuadratic {
    #[new]
    fn new(log_scale: f64, mode: Vec<f64>, precision: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = modalpath::QuadraticForm::new(log_scale, DVector::from_vec(mode), matrix_from_rows(precision)?)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&DVector::from_vec(x)).map_err(to_py)
    }

    #[getter]
    fn log_scale(&self) -> f64 {
        self.inner.log_scale()
    }

    #[getter]
    fn mode(&self) -> Vec<f64> {
        self.inner.mode().iter().copied().collect()
    }

    #[getter]
    fn precision(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.precision())
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.covariance())
    }
}

/// A model plus observations extracted from Python values.
#[allow(clippy::large_enum_variant)]
enum Problem {
    Ricker(modalpath::RickerModel, Vec<Option<u64>>),
    Linear(modalpath::LinearGaussianModel, Vec<Option<DVector<f64>>>),
}

fn extract_linear_obs(obs: &Bound<'_, PyAny>) -> PyResult<Vec<Option<DVector<f64>>>> {
    let items: Vec<Bound<'_, PyAny>> = obs.extract()?;
    items
        .iter()
        .map(|y| {
            if y.is_none() {
                Ok(None)
            } else if let Ok(v) = y.extract::<f64>() {
                Ok(Some(DVector::from_element(1, v)))
            } else {
                Ok(Some(DVector::from_vec(y.extract::<Vec<f64>>()?)))
            }
        })
        .collect()
}

fn problem(model: &Bound<'_, PyAny>, observations: &Bound<'_, PyAny>) -> PyResult<Problem> {
    if let Ok(m) = model.cast::<PyRicker>() {
        Ok(Problem::Ricker(m.borrow().inner.clone(), observations.extract()?))
    } else if let Ok(m) = model.cast::<PyLinear>() {
        Ok(Problem::Linear(m.borrow().inner.clone(), extract_linear_obs(observations)?))
    } else {
        Err(PyValueError::new_err("model must be RickerModel or LinearGaussianModel"))
    }
}

macro_rules! with_problem {
    ($p:expr, |$m:ident, $y:ident| $body:expr) => {
        match $p {
            Problem::Ricker($m, $y) => $body,
            Problem::Linear($m, $y) => $body,
        }
    };
}

fn vecs(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

/// AMP filter modes and smoothed modal path.
#[pyfunction]
fn amp(py: Python<'_>, model: &Bound<'_, PyAny>, observations: &Bound<'_, PyAny>) -> PyResult<Py<PyDict>> {
    let res = with_problem!(problem(model, observations)?, |m, y| run_amp(&m, &y, &AmpConfig::default()))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("filter", vecs(&res.filter_means))?;
    d.set_item("smoother", vecs(&res.smoothed_path.states))?;
    d.set_item("objective", res.smoothed_path.objective)?;
    Ok(d.unbind())
}

fn baseline_dict(
    py: Python<'_>,
    filtered: &[modalpath::baselines::GaussianBelief],
    smoothed: &[modalpath::baselines::GaussianBelief],
) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    let means = |b: &[modalpath::baselines::GaussianBelief]| vecs(&b.iter().map(|g| g.mean.clone()).collect::<Vec<_>>());
    d.set_item("filter", means(filtered))?;
    d.set_item("smoother", means(smoothed))?;
    Ok(d.unbind())
}

/// Kalman-Laplace filter and RTS smoother means.
#[pyfunction]
fn klf(py: Python<'_>, model: &Bound<'_, PyAny>, observations: &Bound<'_, PyAny>) -> PyResult<Py<PyDict>> {
    let (f, s) = with_problem!(problem(model, observations)?, |m, y| {
        klf_filter(&m, &y, &NewtonConfig::default()).and_then(|f| klf_smooth(&m, &f).map(|s| (f, s)))
    })
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    baseline_dict(py, &f.beliefs, &s.smoothed)
}

/// Iterated first-order Taylor filter and RTS smoother means.
#[pyfunction]
#[pyo3(signature = (model, observations, iterations = IPLF_DEFAULT_ITERATIONS))]
fn iplf(
    py: Python<'_>,
    model: &Bound<'_, PyAny>,
    observations: &Bound<'_, PyAny>,
    iterations: usize,
) -> PyResult<Py<PyDict>> {
    let (f, s) = with_problem!(problem(model, observations)?, |m, y| {
        iplf_filter(&m, &y, iterations).and_then(|f| iplf_smooth(&m, &f).map(|s| (f, s)))
    })
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    baseline_dict(py, &f.beliefs, &s.smoothed)
}

/// Exact modal path on a uniform grid of `n` points over `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (model, observations, lo, hi, n, brute_force = false))]
fn grid_modal_path(
    model: &Bound<'_, PyAny>,
    observations: &Bound<'_, PyAny>,
    lo: f64,
    hi: f64,
    n: usize,
    brute_force: bool,
) -> PyResult<(Vec<f64>, f64)> {
    let grid = StateGrid::uniform(lo, hi, n).map_err(to_py)?;
    let path = with_problem!(problem(model, observations)?, |m, y| {
        if brute_force {
            brute_force_modal_path(&m, &y, &grid)
        } else {
            GridTables::build(&m, &y, &grid).and_then(|tables| {
                let bv = tables.backward_values();
                let idx = tables.forward_modal_indices(&bv)?;
                let value = tables.path_value(&idx);
                Ok(modalpath::grid::GridPath {
                    path: modalpath::ModalPath {
                        states: idx.iter().map(|&i| DVector::from_element(1, grid.points()[i])).collect(),
                        objective: value,
                    },
                    indices: idx,
                })
            })
        }
    })
    .map_err(to_py)?;
    Ok((path.path.scalar_states(), path.path.objective))
}

/// Log joint density of a full state path.
#[pyfunction]
fn path_objective(model: &Bound<'_, PyAny>, observations: &Bound<'_, PyAny>, states: Vec<Vec<f64>>) -> PyResult<f64> {
    let states: Vec<DVector<f64>> = states.into_iter().map(DVector::from_vec).collect();
    with_problem!(problem(model, observations)?, |m, y| modalpath::path_objective(&m, &y, &states)).map_err(to_py)
}

/// Linearly interpolated empirical quantile.
#[pyfunction]
fn quantile(values: Vec<f64>, p: f64) -> PyResult<f64> {
    modalpath_bench::quantile(&values, p).map_err(to_py)
}

/// Run the benchmark; returns time-averaged median and q90 per method and
/// stage. Writes CSVs and the SVG when `out` is given.
#[pyfunction]
#[pyo3(signature = (model = "ricker", trials = 100, horizon = 128, seed = 42, methods = "amp,klf,iplf", out = None, threads = None))]
#[allow(clippy::too_many_arguments)]
fn run_benchmark(
    py: Python<'_>,
    model: &str,
    trials: usize,
    horizon: usize,
    seed: u64,
    methods: &str,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let config = BenchConfig {
        model: model.parse::<ModelKind>().map_err(to_py)?,
        horizon,
        trials,
        master_seed: seed,
        methods: parse_methods(methods).map_err(to_py)?,
        out_dir: out.clone().unwrap_or_default(),
        grid_check: false,
        threads,
    };
    let result = py
        .detach(|| modalpath_bench::run_benchmark(&config))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if let Some(dir) = &out {
        emit_csv(&result.trials, &result.summary, dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        emit_plot(&result.summary, dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    let s = &result.summary;
    let d = PyDict::new(py);
    d.set_item("included_trials", s.included_trials)?;
    d.set_item("failed_trials", s.failed_trials)?;
    for &m in &s.methods {
        for stage in [Stage::Filter, Stage::Smoother] {
            let key = format!("{}_{}", m.id(), stage.id());
            d.set_item(format!("{key}_median"), s.mean_median(m, stage))?;
            d.set_item(format!("{key}_q90"), s.mean_q90(m, stage))?;
        }
    }
    Ok(d.unbind())
}

#[pymodule(name = "modalpath")]
fn modalpath_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRicker>()?;
    m.add_class::<PyLinear>()?;
    m.add_class::<PyQuadratic>()?;
    m.add_function(wrap_pyfunction!(amp, m)?)?;
    m.add_function(wrap_pyfunction!(klf, m)?)?;
    m.add_function(wrap_pyfunction!(iplf, m)?)?;
    m.add_function(wrap_pyfunction!(grid_modal_path, m)?)?;
    m.add_function(wrap_pyfunction!(path_objective, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
