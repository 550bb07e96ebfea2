"""Smoke test for the modalpath Python extension."""

import math
import tempfile
from pathlib import Path

import modalpath as mp


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    ricker = mp.RickerModel()
    states, obs = ricker.simulate(horizon=32, seed=42)
    assert len(states) == 33 and obs[0] is None
    assert close(ricker.log_obs(2, 0.0), math.log(2.0) - 2.0, 1e-12)

    amp = mp.amp(ricker, obs)
    klf = mp.klf(ricker, obs)
    for res in (amp, klf):
        assert len(res["filter"]) == 33 and len(res["smoother"]) == 33
    smooth = amp["smoother"]
    assert close(mp.path_objective(ricker, obs, smooth), amp["objective"], 1e-9)

    lin = mp.LinearGaussianModel.scalar(0.0, 1.0, 0.9, 0.0, 0.25, 1.0, 0.5)
    xs, ys = lin.simulate(horizon=20, seed=7)
    a = mp.amp(lin, ys)
    k = mp.klf(lin, ys)
    i = mp.iplf(lin, ys)
    assert all(close(u[0], v[0], 1e-8) for u, v in zip(a["smoother"], k["smoother"]))
    assert all(close(u[0], v[0], 1e-8) for u, v in zip(i["filter"], k["filter"]))

    path, value = mp.grid_modal_path(ricker, obs[:4], -4.0, 5.0, 31)
    brute, brute_value = mp.grid_modal_path(ricker, obs[:4], -4.0, 5.0, 31, brute_force=True)
    assert path == brute and close(value, brute_value, 1e-10)

    q = mp.QuadraticForm(0.5, [1.0], [[2.0]])
    assert close(q.evaluate([1.0]), 0.5, 1e-15)
    assert close(q.evaluate([2.0]), -0.5, 1e-15)
    assert close(mp.quantile([1.0, 2.0, 3.0, 4.0], 0.5), 2.5, 1e-15)

    with tempfile.TemporaryDirectory() as tmp:
        summary = mp.run_benchmark(trials=4, horizon=16, seed=1, out=tmp, threads=2)
        for name in ("trials.csv", "summary.csv", "errors.svg"):
            assert (Path(tmp) / name).exists(), name
    assert summary["included_trials"] + summary["failed_trials"] == 4
    print("modalpath smoke test ok:", {k: round(v, 4) for k, v in summary.items() if k.endswith("median")})


if __name__ == "__main__":
    main()
