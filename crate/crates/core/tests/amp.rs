use modalpath::amp::{amp_init, amp_step, run_amp, AmpConfig};
use modalpath::grid::{GridTables, StateGrid};
use modalpath::{simulate, trial_rng, LinearGaussianModel, RickerModel, ShiftedObs, StateSpaceModel};
use nalgebra::{Matrix2, Vector2};

/// Exact Newton on `v(a, b) = -(a - m)^2 / (2 s^2) - (b - f(a))^2 / (2 q) + y (ln 2 + b) - 2 e^b`
/// with `f(a) = a + r - e^a`, written out by hand.
fn ricker_joint_mode(m: f64, s2: f64, r: f64, q: f64, y: f64) -> (f64, f64) {
    let (mut a, mut b) = (m, m + r - m.exp());
    for _ in 0..200 {
        let f = a + r - a.exp();
        let fp = 1.0 - a.exp();
        let fpp = -a.exp();
        let res = b - f;
        let grad = Vector2::new(-(a - m) / s2 + res * fp / q, -res / q + y - 2.0 * b.exp());
        let h = Matrix2::new(
            -1.0 / s2 - fp * fp / q + res * fpp / q,
            fp / q,
            fp / q,
            -1.0 / q - 2.0 * b.exp(),
        );
        let step = h.try_inverse().unwrap() * grad;
        a -= step[0];
        b -= step[1];
        if step.amax() < 1e-14 {
            break;
        }
    }
    (a, b)
}

#[test]
fn one_step_matches_an_independent_joint_newton() {
    let model = RickerModel::default();
    let (psi0, _) = amp_init(&model, None, &AmpConfig::default()).unwrap();
    for y in [0u64, 1, 4, 12, 30, 70] {
        let rec = amp_step(&psi0, &model, Some(&y), &AmpConfig::default()).unwrap();
        let x1 = rec.value_approx.mode().clone();
        let x0 = rec.cond.apply(&x1).unwrap();
        let (a, b) = ricker_joint_mode(7f64.ln(), 0.01, 44.7f64.ln(), 0.09, y as f64);
        assert!((x0[0] - a).abs() <= 1e-9 && (x1[0] - b).abs() <= 1e-9, "y={y}");

        // with T = 1 the smoothed path is that joint mode
        let obs = vec![None, Some(y)];
        let res = run_amp(&model, &obs, &AmpConfig::default()).unwrap();
        assert!((res.smoothed_path.states[0][0] - a).abs() <= 1e-9);
        assert!((res.smoothed_path.states[1][0] - b).abs() <= 1e-9);
    }
}

#[test]
fn constant_log_likelihood_shift_changes_nothing() {
    let model = RickerModel::default();
    let traj = simulate(&model, 40, &mut trial_rng(8, 2)).unwrap();
    let base = run_amp(&model, &traj.observations, &AmpConfig::default()).unwrap();
    for shift in [-1e3, 17.0] {
        let shifted = ShiftedObs { inner: model.clone(), shift };
        let res = run_amp(&shifted, &traj.observations, &AmpConfig::default()).unwrap();
        for t in 0..=40 {
            assert!((res.filter_means[t][0] - base.filter_means[t][0]).abs() <= 1e-12);
            assert!((res.smoothed_path.states[t][0] - base.smoothed_path.states[t][0]).abs() <= 1e-12);
        }
    }
}

#[test]
fn smoothed_path_is_close_to_the_grid_modal_path() {
    let model = RickerModel::default();
    // Ricker states plunge far below zero after a peak, so the grid must too.
    let grid = StateGrid::uniform(-20.0, 6.0, 2601).unwrap();
    let mut close = 0;
    for seed in 0..50 {
        let traj = simulate(&model, 8, &mut trial_rng(1000 + seed, 0)).unwrap();
        let tables = GridTables::build(&model, &traj.observations, &grid).unwrap();
        let idx = tables.forward_modal_indices(&tables.backward_values()).unwrap();
        let amp = run_amp(&model, &traj.observations, &AmpConfig::default()).unwrap();
        let worst = idx
            .iter()
            .zip(&amp.smoothed_path.states)
            .map(|(&i, x)| (grid.points()[i] - x[0]).abs())
            .fold(0.0, f64::max);
        close += usize::from(worst <= 0.5);
    }
    assert!(close >= 40, "only {close}/50 paths within 0.5");
}

#[test]
fn ricker_trials_rarely_fail() {
    let model = RickerModel::default();
    let ok = (0..100u64)
        .filter(|&k| {
            let traj = simulate(&model, 128, &mut trial_rng(42, k)).unwrap();
            run_amp(&model, &traj.observations, &AmpConfig::default()).is_ok()
        })
        .count();
    assert!(ok >= 95, "{ok}/100");
}

#[test]
fn smoothed_objective_is_reported_and_finite() {
    let model = LinearGaussianModel::scalar(0.5, 2.0, 0.7, 0.0, 0.2, 1.5, 0.3).unwrap();
    let traj = simulate(&model, 20, &mut trial_rng(4, 4)).unwrap();
    let res = run_amp(&model, &traj.observations, &AmpConfig::default()).unwrap();
    let direct = modalpath::path_objective(&model, &traj.observations, &res.smoothed_path.states).unwrap();
    assert_eq!(res.smoothed_path.objective, direct);
    assert!(direct.is_finite());
    assert_eq!(model.state_dim(), 1);
}
