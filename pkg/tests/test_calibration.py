import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmvine import copulas as cp
from dpmvine import vine as vn
from dpmvine.calibration import (
    RHO_CAP,
    THETA_CAP,
    CalibrationSpec,
    ConditionalVine,
    edge_param,
    eta,
    vine_params_at,
)

# 40-digit values from mpmath
TANH_1 = 0.7615941559557648881194582826047935904128
TANH_1_5 = 0.9051482536448664382423036964564955972276
TANH_0_8 = 0.6640367702678489636848446564002428500747
LPE_VALUE = 0.9560397346613510604441628208450617732599

SCENARIO1_C1 = [1, 0.5, 0.5, 0.3, 0.5, 0.5]
SCENARIO1_C2 = [-1, -0.5, -0.5, -0.3, 0.5, 0.5]


class TestCalibrationSpec:
    def test_coefficient_counts(self):
        assert CalibrationSpec("linear", 1).n_coef == 2
        assert CalibrationSpec("linear", 3).n_coef == 4
        assert CalibrationSpec("linear", 0).n_coef == 1
        assert CalibrationSpec("LinearPlusExp", 1).n_coef == 4

    def test_nonlinear_needs_one_covariate(self):
        with pytest.raises(ValueError, match="exactly one covariate"):
            CalibrationSpec("linear_plus_exp", 2)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            CalibrationSpec("spline", 1)


class TestEta:
    def test_zero_coefficients(self):
        np.testing.assert_array_equal(eta(CalibrationSpec(), [0, 0], [-3.0, 0.0, 7.0]), 0.0)

    def test_linear_value(self):
        assert eta(CalibrationSpec(), [1, 0.5], 1.0)[0] == 1.5

    def test_linear_plus_exp_value(self):
        got = eta(CalibrationSpec("linear_plus_exp"), [0.7, 0.3, 0.2, 0.1], 0.2)[0]
        assert got == pytest.approx(LPE_VALUE, abs=1e-12)

    def test_multivariate_covariates(self):
        x = np.array([[1.0, 2.0], [0.0, -1.0]])
        np.testing.assert_allclose(eta(CalibrationSpec("linear", 2), [0.5, 1.0, -2.0], x), [-2.5, 2.5])

    def test_wrong_beta_length(self):
        with pytest.raises(ValueError, match="length 2"):
            eta(CalibrationSpec(), [1, 2, 3], 0.0)

    def test_wrong_covariate_width(self):
        with pytest.raises(ValueError, match="columns"):
            eta(CalibrationSpec("linear", 2), [0, 1, 1], np.zeros((3, 3)))


class TestLinks:
    def test_fisher_center_and_value(self):
        assert edge_param("fisher_gaussian", 0.0)[0] == 0.0
        assert edge_param("fisher_gaussian", 1.0)[0] == pytest.approx(TANH_1, abs=1e-15)

    def test_gumbel_lower_limit(self):
        th, sat = edge_param("one_plus_exp_gumbel", -800.0)
        assert th == 1.0 and not sat

    def test_saturation_flags(self):
        assert edge_param("exp_clayton", 50.0)[0] == THETA_CAP
        assert edge_param("exp_clayton", 50.0)[1]
        assert edge_param("one_plus_exp_gumbel", 1e4)[1]
        assert edge_param("identity_frank", -2e6)[0] == -THETA_CAP
        th, sat = edge_param("fisher_gaussian", 40.0)
        assert th == RHO_CAP and sat
        assert not edge_param("exp_clayton", 0.0)[1]

    def test_unknown_link(self):
        with pytest.raises(ValueError):
            edge_param("logit", 0.0)

    @settings(max_examples=200, deadline=None)
    @given(e=st.floats(-1e4, 1e4))
    def test_every_link_lands_in_domain(self, e):
        for link, fam in [("fisher_gaussian", "gaussian"), ("exp_clayton", "clayton"),
                          ("one_plus_exp_gumbel", "gumbel"), ("identity_frank", "frank")]:
            th, _ = edge_param(link, e)
            cp.check_param(fam, th)
            assert np.isfinite(cp.log_density(fam, th, 0.3, 0.6))

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-15, 15), b=st.floats(-15, 15))
    def test_fisher_monotone_and_sign(self, a, b):
        ra, rb = edge_param("fisher_gaussian", a)[0], edge_param("fisher_gaussian", b)[0]
        assert np.sign(ra) == np.sign(a)
        if a < b:
            assert ra <= rb


class TestVineParams:
    def test_zero_beta_gives_independence(self):
        params, sat = vine_params_at(CalibrationSpec(), np.zeros((3, 2)), ["fisher_gaussian"] * 3, [0.4])
        assert not sat
        np.testing.assert_array_equal(np.concatenate(params), 0.0)

    def test_scenario_one_component_one(self):
        betas = np.reshape(SCENARIO1_C1, (3, 2))
        params, _ = vine_params_at(CalibrationSpec(), betas, ["fisher_gaussian"] * 3, [1.0])
        np.testing.assert_allclose(np.concatenate(params), [TANH_1_5, TANH_0_8, TANH_1], atol=1e-15)

    def test_scenario_one_component_two_signs(self):
        betas = np.reshape(SCENARIO1_C2, (3, 2))
        params, _ = vine_params_at(CalibrationSpec(), betas, ["fisher_gaussian"] * 3, [1.0])
        rho = np.concatenate(params)
        assert rho[0] < 0 and rho[1] < 0 and rho[2] > 0
        np.testing.assert_allclose(rho, [-TANH_1_5, -TANH_0_8, TANH_1], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            vine_params_at(CalibrationSpec(), np.zeros((2, 2)), ["fisher_gaussian"] * 3, [0.0])


class TestConditionalVine:
    def test_default_links(self):
        cv = ConditionalVine(vn.VineSpec("D", 3, ("gaussian", "clayton90", "gumbel")), CalibrationSpec())
        assert cv.links == ("fisher_gaussian", "exp_clayton", "one_plus_exp_gumbel")

    def test_incompatible_link(self):
        with pytest.raises(ValueError, match="not compatible"):
            ConditionalVine(vn.VineSpec("D", 2, "clayton"), CalibrationSpec(), ["identity_frank"])

    def test_covariate_free_when_slopes_vanish(self):
        cv = ConditionalVine(vn.VineSpec("D", 3, ("frank", "clayton", "gumbel180")), CalibrationSpec())
        beta = [[2.0, 0.0], [0.3, 0.0], [-0.5, 0.0]]
        u = np.array([0.2, 0.7, 0.4])
        vals = [cv.logpdf(beta, u, x)[0] for x in (-10.0, 0.0, 10.0)]
        assert vals[0] == vals[1] == vals[2]

    def test_logpdf_matches_vine_per_row(self):
        cv = ConditionalVine(vn.VineSpec("D", 3), CalibrationSpec())
        rng = np.random.default_rng(0)
        u, x = rng.random((4, 3)), rng.normal(size=4)
        got = cv.logpdf(SCENARIO1_C1, u, x)
        for i in range(4):
            rho = np.tanh(np.reshape(SCENARIO1_C1, (3, 2)) @ [1.0, x[i]])
            assert got[i] == pytest.approx(vn.log_density(vn.VineSpec("D", 3), rho, u[i]), abs=1e-12)

    def test_saturated_parameters_give_minus_inf(self):
        cv = ConditionalVine(vn.VineSpec("D", 2, "clayton"), CalibrationSpec())
        assert cv.logpdf([100.0, 0.0], [[0.3, 0.4]], [0.0])[0] == -np.inf

    def test_simulate_one_row_per_covariate(self):
        cv = ConditionalVine(vn.VineSpec("D", 3), CalibrationSpec())
        out = cv.simulate(SCENARIO1_C1, np.linspace(0, 2, 7), np.random.default_rng(1))
        assert out.shape == (7, 3)

    def test_row_wise_coefficients(self):
        cv = ConditionalVine(vn.VineSpec("D", 3, ("clayton", "frank", "gumbel")), CalibrationSpec())
        rng = np.random.default_rng(3)
        betas = rng.normal(scale=0.5, size=(6, 3, 2))
        u, x = rng.random((6, 3)), rng.normal(size=6)
        got = cv.logpdf_rows(betas, u, x)
        for i in range(6):
            assert got[i] == pytest.approx(cv.logpdf(betas[i], u[i], x[i])[0], abs=1e-12)

    def test_nan_eta_is_saturated(self):
        th, sat = edge_param("exp_clayton", np.nan)
        assert sat and np.isfinite(th)
        cv = ConditionalVine(vn.VineSpec("D", 2, "clayton"), CalibrationSpec("linear_plus_exp"))
        # 0 * exp(800) is NaN
        assert cv.logpdf([0.0, 0.0, 0.0, -4000.0], [[0.3, 0.4]], [0.2])[0] == -np.inf

    def test_saturation_is_row_wise(self):
        cv = ConditionalVine(vn.VineSpec("D", 2, "clayton"), CalibrationSpec())
        out = cv.logpdf([0.0, 1.0], [[0.3, 0.4], [0.3, 0.4]], [0.5, 100.0])
        assert np.isfinite(out[0]) and out[1] == -np.inf
