import math
import os
import pathlib

import numpy as np
import pytest

import macrogpo as mg

EXAMPLES = pathlib.Path(os.environ.get("MACROGPO_EXAMPLES", pathlib.Path(__file__).parents[2] / "examples_data"))


def params():
    return mg.KernelParams(prior_mean=0.0, signal_variance=1.0, noise_variance=0.01, length_scales=[0.7, 0.7])


def test_kernel_and_posterior_match_numpy():
    p = params()
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 3, size=(6, 2))
    z = rng.normal(size=6)
    T = rng.uniform(0, 3, size=(3, 2))

    def k(a, b):
        d = (a[:, None, :] - b[None, :, :]) / np.array(p.length_scales)
        return p.signal_variance * np.exp(-0.5 * (d**2).sum(-1))

    assert mg.kernel_cov([0.0, 0.0], [0.0, 0.0], p) == pytest.approx(1.0)
    assert mg.kernel_cov(list(X[0]), list(X[1]), p) == pytest.approx(k(X[:1], X[1:2])[0, 0])

    gram = k(X, X) + p.noise_variance * np.eye(6)
    cross = k(T, X)
    mean, cov = mg.posterior(T, X, z, p)
    np.testing.assert_allclose(mean, cross @ np.linalg.solve(gram, z), atol=1e-10)
    expected = k(T, T) + p.noise_variance * np.eye(3) - cross @ np.linalg.solve(gram, cross.T)
    np.testing.assert_allclose(cov, expected, atol=1e-10)

    gain = mg.info_gain(cov, p.noise_variance)
    assert gain == pytest.approx(0.5 * np.linalg.slogdet(np.eye(3) + cov / p.noise_variance)[1])


def test_grid_actions_and_fields():
    g = mg.Grid([0, 0], [3, 3], [6, 6])
    assert g.locations().shape == (36, 2)
    acts = mg.cardinal_actions(g, [1.25, 1.25], 2)
    assert len(acts) == 4
    assert all(a.shape == (2, 2) for a in acts)
    cells, values = g.sample_phenomenon(params(), 3)
    again = g.sample_phenomenon(params(), 3)[1]
    assert cells.shape == (36, 2)
    np.testing.assert_array_equal(values, again)
    with pytest.raises(mg.InvalidInput):
        mg.KernelParams(noise_variance=0.0)


def test_planners():
    g = mg.Grid([0, 0], [3, 3], [6, 6])
    cat = g.cardinal_catalog(1)
    X = np.array([[1.25, 1.25], [2.25, 0.75]])
    z = np.array([0.3, -0.5])
    start = [1.25, 1.25]

    d1 = mg.plan_epsilon(X, z, start, cat, params(), horizon=1, samples=4)
    rewards = [mg.posterior(a, X, z, params())[0].sum() for a in cat.actions(start)]
    assert d1["action_index"] == int(np.argmax(rewards))

    d2 = mg.plan_epsilon(X, z, start, cat, params(), horizon=2, samples=6, seed=4)
    assert d2["nodes"] == 4 * 6 + (4 * 6) ** 2 - 4 * 6 * (4 - len(cat.actions(start)))  # every anchor here has 4 moves
    any_ = mg.plan_anytime(X, z, start, cat, params(), horizon=2, samples=6, seed=4)
    assert any_["stop"] == "converged"
    assert any_["action_index"] == d2["action_index"]
    assert all(b <= a for a, b in zip(any_["omega_trace"], any_["omega_trace"][1:]))


def test_sample_size_round_trip():
    n = mg.sample_size(0.5, 0.1, 2.0, 2, 4)
    assert n >= 1
    lam = mg.lambda_for_samples(n, 0.1, 2.0, 2, 4)
    assert lam <= 0.5 + 1e-9
    assert mg.sample_size(lam, 0.1, 2.0, 2, 4) == n
    assert mg.sample_size(1.0, 0.1, 0.0, 3, 4) == 1


def test_run_suite(tmp_path):
    res = mg.run_suite(EXAMPLES / "quick.ini", out=tmp_path, replications=2)
    assert res["episodes"] == 10
    finals = [r for r in res["summary"] if r["stage"] == 4]
    assert [r["planner"] for r in finals] == ["h2", "anytime", "h1", "ml", "greedy"]
    assert all(math.isfinite(r["mean_out"]) for r in finals)
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "planner,seed,stage,action_index,avg_norm_output,simple_regret,nodes,millis"
    again = tmp_path / "again"
    mg.run_suite(EXAMPLES / "quick.ini", out=again, replications=2)
    assert (again / "metrics.csv").read_bytes() == (tmp_path / "metrics.csv").read_bytes()
