//! Exact modal-path dynamic programming on a 1-D state grid.
//!
//! Writing `g(j | i)` for the log transition plus observation term from grid
//! point `i` at time `t - 1` to grid point `j` at time `t`, and `g0` for the
//! initial term, the recursions are
//!
//! * backward values: `V_T = 0`, `V_{t-1}(i) = max_j [g(j | i) + V_t(j)]`,
//! * forward values: `psi_0 = g0`, `psi_{t+1}(j) = max_i [psi_t(i) + g(j | i)]`,
//!
//! and the modal path can be read off either of them, or pointwise from
//! `argmax [psi_t + V_t]`. Every argmax breaks ties towards the lowest grid
//! index, which makes all routes return bit-identical index paths.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{check_inputs, path_objective, ModalPath, StateSpaceModel};

/// Largest `n^(T+1)` accepted by [`brute_force_modal_path`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    points: Vec<f64>,
}

impl StateGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("grid needs at least one point".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Contract("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract("grid points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points covering `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Contract(format!(
                "uniform grid needs n >= 2 and lo < hi, got n={n} [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Self::new((0..n).map(|i| lo + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the grid point nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if (p - x).abs() < (self.points[best] - x).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridValueFunction {
    pub time_index: usize,
    pub kind: ValueKind,
    pub values: Vec<f64>,
}

/// Tabulated log-density terms for one observation sequence.
///
/// The transition table is shared by every step; the log-density of the step
/// from grid point `i` at `t - 1` to point `j` at `t` is
/// `transition[i * n + j] + obs[t - 1][j]`.
#[derive(Debug, Clone)]
pub struct GridTables {
    n: usize,
    /// `g0(i)`: log prior plus the `y_0` term when present.
    pub initial: Vec<f64>,
    /// `log N(x_j; f(x_i), Q)`, row-major in `i`.
    pub transition: Vec<f64>,
    /// Observation log-density at every grid point, for `t = 1..=T`.
    pub obs: Vec<Vec<f64>>,
}

impl GridTables {
    pub fn build<M: StateSpaceModel + ?Sized>(
        model: &M,
        observations: &[Option<M::Obs>],
        grid: &StateGrid,
    ) -> Result<Self> {
        check_inputs(model, observations)?;
        if model.state_dim() != 1 {
            return Err(Error::Dimension(format!(
                "grid recursions need a 1-D state, model has dimension {}",
                model.state_dim()
            )));
        }
        let n = grid.len();
        let pts: Vec<DVector<f64>> = grid.points().iter().map(|&p| DVector::from_element(1, p)).collect();
        let obs_term = |y: &Option<M::Obs>, x: &DVector<f64>| y.as_ref().map_or(0.0, |y| model.log_obs(y, x));

        let initial = pts
            .iter()
            .map(|x| model.log_init(x) + obs_term(&observations[0], x))
            .collect();
        // same arithmetic as `log_trans`, without per-cell allocation
        let noise = model.trans_noise();
        let (log_norm, prec, noise_mean) = (noise.log_norm(), noise.precision()[(0, 0)], noise.mean()[0]);
        let means: Vec<f64> = pts.iter().map(|x| model.trans_mean(x)[0]).collect();
        let xs = grid.points();
        let mut transition = vec![0.0; n * n];
        transition.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                let d = xs[j] - means[i] - noise_mean;
                *cell = log_norm - 0.5 * (d * (prec * d));
            }
        });
        let obs = observations[1..]
            .iter()
            .map(|y| pts.iter().map(|x| obs_term(y, x)).collect())
            .collect();
        Ok(Self {
            n,
            initial,
            transition,
            obs,
        })
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.obs.len()
    }

    #[inline]
    fn entry(&self, t: usize, i: usize, j: usize) -> f64 {
        self.transition[i * self.n + j] + self.obs[t - 1][j]
    }

    /// Sum of the tabulated terms along an index path.
    pub fn path_value(&self, indices: &[usize]) -> f64 {
        let mut v = self.initial[indices[0]];
        for t in 1..indices.len() {
            v += self.entry(t, indices[t - 1], indices[t]);
        }
        v
    }

    pub fn backward_values(&self) -> Vec<GridValueFunction> {
        let (n, horizon) = (self.n, self.horizon());
        let mut values = vec![vec![0.0; n]; horizon + 1];
        for t in (1..=horizon).rev() {
            let (head, tail) = values.split_at_mut(t);
            let next = &tail[0];
            for (i, v) in head[t - 1].iter_mut().enumerate() {
                *v = max_by_index(n, |j| self.entry(t, i, j) + next[j]).1;
            }
        }
        values
            .into_iter()
            .enumerate()
            .map(|(t, values)| GridValueFunction {
                time_index: t,
                kind: ValueKind::Backward,
                values,
            })
            .collect()
    }

    pub fn forward_values(&self) -> Vec<GridValueFunction> {
        let n = self.n;
        let mut values = vec![self.initial.clone()];
        for t in 1..=self.horizon() {
            let prev = &values[t - 1];
            let cur = (0..n)
                .map(|j| max_by_index(n, |i| prev[i] + self.entry(t, i, j)).1)
                .collect();
            values.push(cur);
        }
        values
            .into_iter()
            .enumerate()
            .map(|(t, values)| GridValueFunction {
                time_index: t,
                kind: ValueKind::Forward,
                values,
            })
            .collect()
    }

    /// Modal path from the backward value functions, constructed forwards.
    pub fn forward_modal_indices(&self, backward: &[GridValueFunction]) -> Result<Vec<usize>> {
        self.check_values(backward, ValueKind::Backward)?;
        let n = self.n;
        let mut idx = Vec::with_capacity(self.horizon() + 1);
        idx.push(max_by_index(n, |i| self.initial[i] + backward[0].values[i]).0);
        for t in 1..=self.horizon() {
            let prev = idx[t - 1];
            idx.push(max_by_index(n, |j| self.entry(t, prev, j) + backward[t].values[j]).0);
        }
        Ok(idx)
    }

    /// Modal path from the forward value functions, constructed backwards.
    pub fn backward_modal_indices(&self, forward: &[GridValueFunction]) -> Result<Vec<usize>> {
        self.check_values(forward, ValueKind::Forward)?;
        let (n, horizon) = (self.n, self.horizon());
        let mut idx = vec![0; horizon + 1];
        idx[horizon] = argmax(&forward[horizon].values);
        for t in (0..horizon).rev() {
            let next = idx[t + 1];
            idx[t] = max_by_index(n, |i| forward[t].values[i] + self.entry(t + 1, i, next)).0;
        }
        Ok(idx)
    }

    /// Exhaustive search over all `n^(T+1)` index paths (depth-first with an
    /// admissible bound built from per-step table maxima).
    pub fn brute_force_indices(&self) -> Result<(Vec<usize>, f64)> {
        let (n, horizon) = (self.n, self.horizon());
        let size = (n as f64).powi(horizon as i32 + 1);
        if size > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge(format!(
                "{n}^{} = {size:.3e} paths exceeds the enumeration limit {BRUTE_FORCE_LIMIT:.0e}",
                horizon + 1
            )));
        }
        // remaining[t]: upper bound on the terms of steps t+1..=T
        let mut remaining = vec![0.0; horizon + 1];
        for t in (0..horizon).rev() {
            let step_max = (0..n * n)
                .map(|k| self.transition[k] + self.obs[t][k % n])
                .fold(f64::NEG_INFINITY, f64::max);
            remaining[t] = remaining[t + 1] + step_max;
        }
        let mut search = Search {
            tables: self,
            remaining,
            current: vec![0; horizon + 1],
            best: Vec::new(),
            best_value: f64::NEG_INFINITY,
        };
        for i in 0..n {
            search.current[0] = i;
            search.descend(0, self.initial[i]);
        }
        Ok((search.best, search.best_value))
    }

    fn check_values(&self, values: &[GridValueFunction], kind: ValueKind) -> Result<()> {
        if values.len() != self.horizon() + 1
            || values.iter().any(|v| v.kind != kind || v.values.len() != self.n)
        {
            return Err(Error::Contract(format!(
                "expected {} {kind:?} value functions over {} grid points",
                self.horizon() + 1,
                self.n
            )));
        }
        Ok(())
    }
}

struct Search<'a> {
    tables: &'a GridTables,
    remaining: Vec<f64>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
}

impl Search<'_> {
    fn descend(&mut self, t: usize, acc: f64) {
        let slack = 1e-9 * (1.0 + self.best_value.abs());
        if acc + self.remaining[t] + slack < self.best_value {
            return;
        }
        if t == self.tables.horizon() {
            // strict improvement keeps the lexicographically first maximizer
            if acc > self.best_value {
                self.best_value = acc;
                self.best = self.current.clone();
            }
            return;
        }
        let prev = self.current[t];
        for j in 0..self.tables.n {
            self.current[t + 1] = j;
            let v = acc + self.tables.entry(t + 1, prev, j);
            self.descend(t + 1, v);
        }
    }
}

/// First index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    max_by_index(values.len(), |i| values[i]).0
}

fn max_by_index(n: usize, f: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = (0, f(0));
    for i in 1..n {
        let v = f(i);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Grid modal path: indices into the grid plus the continuous path.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub indices: Vec<usize>,
    pub path: ModalPath,
}

fn to_path<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
    indices: Vec<usize>,
) -> Result<GridPath> {
    let states: Vec<DVector<f64>> = indices
        .iter()
        .map(|&i| DVector::from_element(1, grid.points()[i]))
        .collect();
    let objective = path_objective(model, observations, &states)?;
    Ok(GridPath {
        indices,
        path: ModalPath { states, objective },
    })
}

pub fn backward_value_recursion<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
) -> Result<Vec<GridValueFunction>> {
    Ok(GridTables::build(model, observations, grid)?.backward_values())
}

pub fn forward_value_recursion<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
) -> Result<Vec<GridValueFunction>> {
    Ok(GridTables::build(model, observations, grid)?.forward_values())
}

pub fn forward_modal_recursion<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
    backward: &[GridValueFunction],
) -> Result<GridPath> {
    let tables = GridTables::build(model, observations, grid)?;
    let idx = tables.forward_modal_indices(backward)?;
    to_path(model, observations, grid, idx)
}

pub fn backward_modal_recursion<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
    forward: &[GridValueFunction],
) -> Result<GridPath> {
    let tables = GridTables::build(model, observations, grid)?;
    let idx = tables.backward_modal_indices(forward)?;
    to_path(model, observations, grid, idx)
}

pub fn brute_force_modal_path<M: StateSpaceModel + ?Sized>(
    model: &M,
    observations: &[Option<M::Obs>],
    grid: &StateGrid,
) -> Result<GridPath> {
    let tables = GridTables::build(model, observations, grid)?;
    let (idx, _) = tables.brute_force_indices()?;
    to_path(model, observations, grid, idx)
}

/// Grid MAP-filter trajectory: `argmax psi_t` for every `t`, as indices.
pub fn map_filter_on_grid(forward: &[GridValueFunction]) -> Vec<usize> {
    forward.iter().map(|f| argmax(&f.values)).collect()
}

/// `argmax [psi_t + V_t]`, the modal state at time `t`, as a grid index.
pub fn two_filter_mode(
    forward: &[GridValueFunction],
    backward: &[GridValueFunction],
    t: usize,
) -> Result<usize> {
    let (f, b) = match (forward.get(t), backward.get(t)) {
        (Some(f), Some(b)) => (f, b),
        _ => return Err(Error::Contract(format!("no value functions at t={t}"))),
    };
    if f.values.len() != b.values.len() || f.kind != ValueKind::Forward || b.kind != ValueKind::Backward {
        return Err(Error::Contract("value functions disagree in grid or kind".into()));
    }
    Ok(max_by_index(f.values.len(), |i| f.values[i] + b.values[i]).0)
}

/// `max_i [psi_t(i) + V_t(i)]`; the same number for every `t`.
pub fn combined_optimum(forward: &GridValueFunction, backward: &GridValueFunction) -> f64 {
    max_by_index(forward.values.len(), |i| forward.values[i] + backward.values[i]).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGaussianModel, RickerModel};
    use nalgebra::dvector;

    fn two_point_instance() -> (LinearGaussianModel, Vec<Option<DVector<f64>>>, StateGrid) {
        let m = LinearGaussianModel::scalar(0.2, 1.0, 0.7, 0.1, 0.5, 1.0, 0.8).unwrap();
        (m, vec![None, Some(dvector![0.9])], StateGrid::new(vec![-0.5, 1.0]).unwrap())
    }

    #[test]
    fn zero_horizon() {
        let m = RickerModel::default();
        let grid = StateGrid::uniform(-4.0, 5.0, 31).unwrap();
        let obs = vec![None];
        let bv = backward_value_recursion(&m, &obs, &grid).unwrap();
        assert_eq!(bv.len(), 1);
        assert!(bv[0].values.iter().all(|&v| v == 0.0));
        let fv = forward_value_recursion(&m, &obs, &grid).unwrap();
        let init: Vec<f64> = grid.points().iter().map(|&p| m.log_init(&dvector![p])).collect();
        assert_eq!(fv[0].values, init);
        let fwd = forward_modal_recursion(&m, &obs, &grid, &bv).unwrap();
        assert_eq!(fwd.indices, vec![argmax(&init)]);
        let bwd = backward_modal_recursion(&m, &obs, &grid, &fv).unwrap();
        assert_eq!(bwd.indices, fwd.indices);
    }

    #[test]
    fn two_point_backward_value_by_hand() {
        let (m, obs, grid) = two_point_instance();
        let tables = GridTables::build(&m, &obs, &grid).unwrap();
        let g = grid.points();
        let term = |i: usize, j: usize| {
            m.log_trans(&dvector![g[j]], &dvector![g[i]]) + m.log_obs(&dvector![0.9], &dvector![g[j]])
        };
        let bv = tables.backward_values();
        for i in 0..2 {
            assert_eq!(bv[0].values[i], term(i, 0).max(term(i, 1)));
        }
        // all four paths
        let mut best = (vec![], f64::NEG_INFINITY);
        for i in 0..2 {
            for j in 0..2 {
                let v = path_objective(&m, &obs, &[dvector![g[i]], dvector![g[j]]]).unwrap();
                if v > best.1 {
                    best = (vec![i, j], v);
                }
            }
        }
        let fwd = forward_modal_recursion(&m, &obs, &grid, &bv).unwrap();
        assert_eq!(fwd.indices, best.0);
        let brute = brute_force_modal_path(&m, &obs, &grid).unwrap();
        assert_eq!(brute.indices, best.0);
        assert!((brute.path.objective - best.1).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid_has_unique_path() {
        let m = RickerModel::default();
        let grid = StateGrid::new(vec![2.0]).unwrap();
        let obs = vec![None, Some(10), Some(20)];
        let p = brute_force_modal_path(&m, &obs, &grid).unwrap();
        assert_eq!(p.indices, vec![0, 0, 0]);
    }

    #[test]
    fn brute_force_guard() {
        let m = RickerModel::default();
        let grid = StateGrid::uniform(-4.0, 5.0, 200).unwrap();
        let obs = vec![None, Some(1), Some(1), Some(1), Some(1)];
        assert!(matches!(
            brute_force_modal_path(&m, &obs, &grid),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(StateGrid::new(vec![0.0, 0.0]).is_err());
        assert!(StateGrid::new(vec![]).is_err());
        assert!(StateGrid::uniform(1.0, 0.0, 5).is_err());
        let g = StateGrid::uniform(-4.0, 5.0, 10).unwrap();
        assert!(g.spacings().iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert_eq!(g.nearest(0.4), 4);
    }

    #[test]
    fn two_filter_reductions() {
        let m = RickerModel::default();
        let grid = StateGrid::uniform(-4.0, 5.0, 31).unwrap();
        let obs = vec![None, Some(12), Some(40)];
        let tables = GridTables::build(&m, &obs, &grid).unwrap();
        let (fv, bv) = (tables.forward_values(), tables.backward_values());
        assert_eq!(two_filter_mode(&fv, &bv, 2).unwrap(), argmax(&fv[2].values));
        let init_plus: Vec<f64> = (0..31).map(|i| tables.initial[i] + bv[0].values[i]).collect();
        assert_eq!(two_filter_mode(&fv, &bv, 0).unwrap(), argmax(&init_plus));
        assert!(two_filter_mode(&fv, &bv, 3).is_err());
    }

    #[test]
    fn rejects_multivariate_models() {
        let m = LinearGaussianModel::new(
            crate::models::Gaussian::new(dvector![0.0, 0.0], nalgebra::DMatrix::identity(2, 2)).unwrap(),
            nalgebra::DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            nalgebra::DMatrix::identity(2, 2),
            nalgebra::DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            nalgebra::DMatrix::identity(2, 2),
            false,
        )
        .unwrap();
        let grid = StateGrid::uniform(-1.0, 1.0, 3).unwrap();
        assert!(matches!(
            GridTables::build(&m, &[None], &grid),
            Err(Error::Dimension(_))
        ));
    }
}
