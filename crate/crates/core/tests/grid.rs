use modalpath::grid::{GridTables, StateGrid};
use modalpath::kalman::{kalman_filter, rts_smoother};
use modalpath::{path_objective, simulate, trial_rng, LinearGaussianModel, RickerModel, StateSpaceModel};
use nalgebra::DVector;

fn modal_value<M: StateSpaceModel>(model: &M, obs: &[Option<M::Obs>], grid: &StateGrid) -> (Vec<usize>, f64) {
    let tables = GridTables::build(model, obs, grid).unwrap();
    let idx = tables.forward_modal_indices(&tables.backward_values()).unwrap();
    let value = tables.path_value(&idx);
    (idx, value)
}

#[test]
fn nested_refinement_never_lowers_the_optimum() {
    let model = RickerModel::default();
    for seed in 0..5 {
        let traj = simulate(&model, 6, &mut trial_rng(seed, 0)).unwrap();
        let mut last = f64::NEG_INFINITY;
        for n in [11, 21, 41, 81] {
            let (_, value) = modal_value(&model, &traj.observations, &StateGrid::uniform(-4.0, 5.0, n).unwrap());
            assert!(value >= last - 1e-12, "n={n}: {value} < {last}");
            last = value;
        }
    }
}

#[test]
fn path_value_matches_the_objective() {
    let model = RickerModel::default();
    let traj = simulate(&model, 5, &mut trial_rng(3, 1)).unwrap();
    let grid = StateGrid::uniform(-4.0, 5.0, 31).unwrap();
    let (idx, value) = modal_value(&model, &traj.observations, &grid);
    let states: Vec<_> = idx.iter().map(|&i| DVector::from_element(1, grid.points()[i])).collect();
    let direct = path_objective(&model, &traj.observations, &states).unwrap();
    assert!((value - direct).abs() <= 1e-10);
}

#[test]
fn linear_gaussian_grid_mode_tracks_rts() {
    let model = LinearGaussianModel::scalar(0.0, 1.0, 0.8, 0.1, 0.3, 1.0, 0.4).unwrap();
    let grid = StateGrid::uniform(-6.0, 6.0, 601).unwrap();
    let spacing = grid.points()[1] - grid.points()[0];
    for seed in 0..5 {
        let traj = simulate(&model, 12, &mut trial_rng(seed, 9)).unwrap();
        let rts = rts_smoother(&model, &kalman_filter(&model, &traj.observations).unwrap()).unwrap();
        let (idx, _) = modal_value(&model, &traj.observations, &grid);
        for (t, &i) in idx.iter().enumerate() {
            assert!((grid.points()[i] - rts[t].mean[0]).abs() <= spacing, "seed {seed} t {t}");
        }
    }
}

#[test]
fn nonuniform_grids_are_supported() {
    let model = RickerModel::default();
    let traj = simulate(&model, 3, &mut trial_rng(11, 0)).unwrap();
    let points: Vec<f64> = (0..40).map(|k| -4.0 + 9.0 * (k as f64 / 39.0).powf(1.3)).collect();
    let grid = StateGrid::new(points).unwrap();
    let tables = GridTables::build(&model, &traj.observations, &grid).unwrap();
    let fwd = tables.forward_modal_indices(&tables.backward_values()).unwrap();
    let (brute, _) = tables.brute_force_indices().unwrap();
    assert_eq!(fwd, brute);
}
