import csv
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from dpmvine.dataio import panel_arrays
from dpmvine.scenarios import (
    FD_FIXTURE,
    SCENARIO_NAMES,
    Component,
    ScenarioSpec,
    generate_scenario_data,
    get_scenario,
    pairwise_taus,
    run_scenario,
    synthetic_panel,
)


def gaussian_tau(eta):
    return 2.0 / np.pi * np.arcsin(np.tanh(eta))


class TestSpecs:
    @pytest.mark.parametrize("name", SCENARIO_NAMES)
    def test_all_builtins_construct(self, name):
        spec = get_scenario(name)
        assert spec.name == name
        assert spec.weights.sum() == pytest.approx(1.0)

    def test_variant_lookup(self):
        assert get_scenario(3, "b").name == "3b"
        assert get_scenario("3b").name == "3b"
        assert get_scenario(1, "b").name == "1"

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            get_scenario(7)

    def test_overrides(self):
        spec = get_scenario("2a", n_obs=40, n_replicates=2)
        assert (spec.n_obs, spec.n_replicates) == (40, 2)

    def test_bad_weights(self):
        comps = (Component((0,) * 6, weight=0.7), Component((0,) * 6, weight=0.7))
        with pytest.raises(ValueError, match="sum to 1"):
            ScenarioSpec("x", comps)

    def test_bad_coefficient_count(self):
        with pytest.raises(ValueError, match="expected 12"):
            ScenarioSpec("x", (Component((0,) * 6),), calibration="linear_plus_exp")

    def test_identical_components(self):
        assert not get_scenario(1).identical_components
        assert get_scenario("4a").identical_components
        same = (Component((1,) * 6, weight=0.5), Component((1,) * 6, weight=0.5))
        assert ScenarioSpec("x", same).identical_components


class TestGeneration:
    def test_zero_weight_component_never_drawn(self):
        base = get_scenario(1)
        comps = (replace(base.components[0], weight=1.0), replace(base.components[1], weight=0.0))
        _, labels = generate_scenario_data(replace(base, components=comps, n_obs=300), 0)
        assert np.all(labels == 1)

    def test_shapes_and_open_interval(self):
        for name in SCENARIO_NAMES:
            data, labels = generate_scenario_data(get_scenario(name, n_obs=200), 1)
            assert data.u.shape == (200, 3) and data.x.shape == (200, 1)
            assert np.all((data.u > 0) & (data.u < 1))
            assert set(np.unique(labels)) <= {1, 2}

    def test_covariate_law(self):
        data, _ = generate_scenario_data(get_scenario("5a", n_obs=20000), 2)
        assert data.x.mean() == pytest.approx(0.2, abs=0.005)
        assert data.x.std() == pytest.approx(0.1, rel=0.03)

    def test_seeded(self):
        a, la = generate_scenario_data(get_scenario("3a"), 9)
        b, lb = generate_scenario_data(get_scenario("3a"), 9)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(la, lb)

    def test_first_component_tau_at_fixed_covariate(self):
        spec = get_scenario(1)
        u = spec.vine(0).simulate(spec.components[0].beta, np.ones(20000), np.random.default_rng(3))
        # first-tree edges are unconditional pairs 12 and 23
        assert stats.kendalltau(u[:, 0], u[:, 1])[0] == pytest.approx(gaussian_tau(1.5), abs=0.015)
        assert stats.kendalltau(u[:, 1], u[:, 2])[0] == pytest.approx(gaussian_tau(0.8), abs=0.015)

    def test_clayton_parameters_positive(self):
        spec = get_scenario("4a")
        x = np.random.default_rng(4).normal(1.0, 1.0, 100000)
        params, saturated = spec.vine(0).params(spec.components[0].beta, x[:, None])
        assert not saturated
        assert all(np.all(p > 0) for p in params)

    def test_rotated_components_give_negative_dependence(self):
        data, _ = generate_scenario_data(get_scenario("4b", n_obs=20000), 5)
        x = np.random.default_rng(6).normal(1.0, 1.0, 10**6)
        theta = np.exp(-1.5 - 0.4 * x)
        # the 90-degree rotation flips the sign of the Clayton tau
        expected = -np.mean(theta / (theta + 2.0))
        assert stats.kendalltau(data.u[:, 0], data.u[:, 1])[0] == pytest.approx(expected, abs=0.015)

    def test_pairwise_taus_order(self, rng):
        U = rng.random((50, 3))
        U[:, 2] = U[:, 0]
        t = pairwise_taus(U)
        assert t[1] == pytest.approx(1.0)
        assert abs(t[0]) < 1


class TestRunScenario:
    def test_smoke(self, tmp_path):
        spec = get_scenario(1, n_obs=30, n_replicates=2)
        rep = run_scenario(spec, n_iter=10, burn_in=2, seed=3, out_dir=tmp_path, n_predictive=200, n_truth=200)
        assert len(rep.rows) == 2
        assert all(r["modal_n"] >= 1 for r in rep.rows)
        assert all(-1 <= r["ari"] <= 1 for r in rep.rows)
        assert (tmp_path / "report.csv").exists()
        for suffix in ("udata.csv", "labels.csv", "predictive.csv", "hist.json"):
            assert (tmp_path / f"rep001_{suffix}").exists()
        with open(tmp_path / "report.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 2

    def test_identical_components_have_no_ari(self):
        rep = run_scenario(get_scenario("4a", n_obs=20, n_replicates=1), n_iter=5, burn_in=1,
                           n_predictive=50, n_truth=50)
        assert rep.rows[0]["ari"] is None and rep.mean_ari is None

    def test_deterministic_and_independent_of_workers(self):
        spec = get_scenario("2a", n_obs=25, n_replicates=2)
        kw = dict(n_iter=8, burn_in=2, seed=11, n_predictive=100, n_truth=100)
        a = run_scenario(spec, **kw).rows
        b = run_scenario(spec, n_jobs=2, **kw).rows
        assert a == b


class TestSyntheticPanel:
    def test_structure(self):
        records, labels = synthetic_panel(200, 0)
        Y, X = panel_arrays(records)
        assert Y.shape == (200, 4) and X.shape == (200, 1)
        assert np.all((Y > 0) & (Y < 1))
        assert set(np.unique(X)) <= {0.0, 1.0}
        assert len({(r.country, r.period) for r in records}) == 200

    def test_cluster_disaster_rates(self):
        records, labels = synthetic_panel(5000, 1)
        _, X = panel_arrays(records)
        for k, phi in enumerate(FD_FIXTURE["phi"], start=1):
            assert X[labels == k, 0].mean() == pytest.approx(phi, abs=0.04)

    def test_opposite_covariate_effects(self):
        records, labels = synthetic_panel(20000, 2)
        Y, X = panel_arrays(records)
        x = X[:, 0] == 1
        for k, sign in ((1, -1), (2, 1)):
            m = labels == k
            t1 = stats.kendalltau(Y[m & x, 0], Y[m & x, 1])[0]
            t0 = stats.kendalltau(Y[m & ~x, 0], Y[m & ~x, 1])[0]
            assert np.sign(t1 - t0) == sign
