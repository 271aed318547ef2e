import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from dpmvine import copulas as cp

FAMILIES = [
    "gaussian", "clayton", "clayton90", "clayton180", "clayton270",
    "gumbel", "gumbel90", "gumbel180", "gumbel270", "frank",
]

# moderate parameters, |tau| <= ~0.7
TYPICAL = {
    "gaussian": [-0.8, 0.3, 0.85],
    "clayton": [0.3, 2.0, 4.5],
    "gumbel": [1.1, 1.8, 3.2],
    "frank": [-9.0, 1.5, 9.0],
}


def _params(fam):
    return TYPICAL[cp.parse_family(fam).name]


def test_parse_family():
    assert cp.parse_family("clayton90") == cp.Family("clayton", 90)
    assert cp.parse_family("Gumbel") == cp.Family("gumbel", 0)
    with pytest.raises(ValueError):
        cp.parse_family("gaussian90")
    with pytest.raises(ValueError):
        cp.parse_family("student")


def test_transpose_swaps_90_and_270():
    assert cp.Family("clayton", 90).transpose() == cp.Family("clayton", 270)
    assert cp.Family("gumbel", 180).transpose() == cp.Family("gumbel", 180)


@pytest.mark.parametrize(
    "fam, theta",
    [("gaussian", 1.0), ("gaussian", -1.2), ("clayton", 0.0), ("clayton", -0.5),
     ("gumbel", 0.99), ("frank", np.inf)],
)
def test_invalid_parameters_raise(fam, theta):
    with pytest.raises(cp.CopulaParameterError):
        cp.density(fam, theta, 0.3, 0.4)


class TestDensity:
    def test_gaussian_zero_rho_is_independence(self):
        assert cp.density("gaussian", 0.0, 0.3, 0.8) == pytest.approx(1.0, abs=1e-15)

    def test_clayton_small_theta_is_independence(self):
        assert cp.density("clayton", 1e-12, 0.5, 0.5) == pytest.approx(1.0, abs=1e-9)

    def test_gaussian_matches_bivariate_normal_oracle(self):
        rho, u, v = 0.5, 0.5, 0.5
        a, b = stats.norm.ppf(u), stats.norm.ppf(v)
        joint = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf([a, b])
        expected = joint / (stats.norm.pdf(a) * stats.norm.pdf(b))
        assert cp.density("gaussian", rho, u, v) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("rho", [-0.7, 0.2, 0.9])
    def test_gaussian_random_points_match_oracle(self, rho):
        rng = np.random.default_rng(3)
        uv = rng.uniform(0.01, 0.99, size=(50, 2))
        z = stats.norm.ppf(uv)
        joint = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).logpdf(z)
        expected = joint - stats.norm.logpdf(z).sum(axis=1)
        got = cp.log_density("gaussian", rho, uv[:, 0], uv[:, 1])
        np.testing.assert_allclose(got, expected, atol=1e-11)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_integrates_to_one(self, fam):
        rng = np.random.default_rng(11)
        u, v = rng.random((2, 10**6))
        for theta in _params(fam):
            assert cp.density(fam, theta, u, v).mean() == pytest.approx(1.0, abs=0.01)

    @pytest.mark.parametrize("name", ["clayton", "gumbel"])
    def test_rotation_180_reflects_arguments(self, name):
        rng = np.random.default_rng(5)
        u, v = rng.uniform(0.01, 0.99, (2, 200))
        theta = _params(name)[1]
        np.testing.assert_allclose(
            cp.density(name + "180", theta, u, v), cp.density(name, theta, 1 - u, 1 - v), rtol=1e-12
        )

    def test_clayton_tends_to_one_near_zero(self):
        g = np.linspace(0.05, 0.95, 19)
        u, v = np.meshgrid(g, g)
        np.testing.assert_allclose(cp.density("clayton", 1e-6, u, v), 1.0, atol=1e-3)

    def test_frank_near_zero_is_independence(self):
        assert cp.density("frank", 5e-7, 0.2, 0.9) == 1.0
        assert cp.h_function("frank", -5e-7, 0.2, 0.9) == pytest.approx(0.2)

    def test_frank_negative_reflection(self):
        rng = np.random.default_rng(6)
        u, v = rng.uniform(0.01, 0.99, (2, 100))
        np.testing.assert_allclose(
            cp.cdf("frank", -4.0, u, v), u - cp.cdf("frank", 4.0, u, 1 - v), atol=1e-13
        )

    def test_boundary_values_are_finite(self):
        for fam in FAMILIES:
            for theta in _params(fam):
                out = cp.log_density(fam, theta, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0])
                assert np.all(np.isfinite(out))


class TestHFunction:
    def test_independence_gives_identity(self):
        assert cp.h_function("gaussian", 0.0, 0.7, 0.2) == pytest.approx(0.7, abs=1e-15)
        assert cp.h_function("independence", 0.0, 0.7, 0.2) == pytest.approx(0.7)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_upper_boundary(self, fam):
        for theta in _params(fam):
            assert cp.h_function(fam, theta, 1.0 - 1e-12, 0.37) == pytest.approx(1.0, abs=1e-6)

    def test_clayton_matches_finite_difference(self):
        theta, u, v, e = 2.0, 0.4, 0.6, 1e-6
        # closed-form Clayton cdf, written independently of the package
        c = lambda a, b: (a ** -theta + b ** -theta - 1) ** (-1 / theta)
        fd = (c(u, v + e) - c(u, v - e)) / (2 * e)
        assert cp.h_function("clayton", theta, u, v) == pytest.approx(fd, abs=1e-5)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_grid_matches_cdf_derivative(self, fam):
        g = (np.arange(20) + 0.5) / 20
        u, v = np.meshgrid(g, g)
        e = 1e-6
        for theta in _params(fam):
            fd = (cp.cdf(fam, theta, u, v + e) - cp.cdf(fam, theta, u, v - e)) / (2 * e)
            np.testing.assert_allclose(cp.h_function(fam, theta, u, v), fd, atol=1e-5)

    def test_gaussian_cdf_special_points(self):
        # Phi2(0, 0; rho) = 1/4 + arcsin(rho) / (2 pi)
        assert cp.cdf("gaussian", 0.5, 0.5, 0.5) == pytest.approx(0.25 + np.arcsin(0.5) / (2 * np.pi))
        assert cp.cdf("gaussian", 0.3, 0.5, 0.8) == pytest.approx(
            stats.multivariate_normal([0, 0], [[1, 0.3], [0.3, 1]]).cdf([0, stats.norm.ppf(0.8)]),
            abs=1e-6,
        )

    @settings(max_examples=60, deadline=None)
    @given(
        fam=st.sampled_from(FAMILIES),
        pick=st.integers(0, 2),
        v=st.floats(0.01, 0.99),
        u1=st.floats(0.001, 0.999),
        u2=st.floats(0.001, 0.999),
    )
    def test_monotone_in_u(self, fam, pick, v, u1, u2):
        theta = _params(fam)[pick]
        lo, hi = sorted((u1, u2))
        assert cp.h_function(fam, theta, lo, v) <= cp.h_function(fam, theta, hi, v) + 1e-12


class TestHInverse:
    def test_independence(self):
        assert cp.h_inverse("gaussian", 0.0, 0.25, 0.9) == pytest.approx(0.25, abs=1e-15)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_round_trip(self, fam):
        rng = np.random.default_rng(17)
        u, v = rng.uniform(0.001, 0.999, (2, 1000))
        for theta in _params(fam):
            w = cp.h_function(fam, theta, u, v)
            # du/dw = 1/c(u, v): where the density is tiny one ulp of w moves u by
            # more than 1e-8, so only well-conditioned points can round-trip
            ok = cp.density(fam, theta, u, v) > 1e-6
            assert ok.mean() > 0.95
            np.testing.assert_allclose(cp.h_inverse(fam, theta, w[ok], v[ok]), u[ok], atol=1e-8)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_solves_h_equation(self, fam):
        rng = np.random.default_rng(18)
        w, v = rng.uniform(0.001, 0.999, (2, 1000))
        for theta in _params(fam):
            u = cp.h_inverse(fam, theta, w, v)
            np.testing.assert_allclose(cp.h_function(fam, theta, u, v), w, atol=1e-10)

    def test_gumbel_matches_bisection_oracle(self):
        theta, w, v = 1.5, 0.5, 0.5

        def h(u):
            x, y = -np.log(u), -np.log(v)
            a = (x**theta + y**theta) ** (1 / theta)
            return np.exp(-a) * a ** (1 - theta) * y ** (theta - 1) / v - w

        expected = optimize.bisect(h, 1e-12, 1 - 1e-12, xtol=1e-14)
        assert cp.h_inverse("gumbel", theta, w, v) == pytest.approx(expected, abs=1e-12)

    def test_frank_closed_form_solves_h(self):
        rng = np.random.default_rng(2)
        w, v = rng.uniform(0.01, 0.99, (2, 200))
        for theta in (-12.0, 0.5, 25.0):
            u = cp.h_inverse("frank", theta, w, v)
            np.testing.assert_allclose(cp.h_function("frank", theta, u, v), w, atol=1e-10)

    def test_non_convergence_raises(self):
        with pytest.raises(cp.ConvergenceError):
            cp._bisect(cp._gumbel_h, np.array([0.5]), np.array([0.5]), np.array([2.0]), max_iter=3)


class TestSampling:
    @pytest.mark.parametrize(
        "fam, theta, expected",
        [
            ("independence", 0.0, 0.0),
            ("clayton", 2.0, 2.0 / (2.0 + 2.0)),
            ("gaussian", 0.5, 2 / np.pi * np.arcsin(0.5)),
            ("gumbel90", 2.0, -0.5),
            ("frank", 5.0, None),
        ],
    )
    def test_empirical_tau(self, fam, theta, expected):
        if expected is None:
            # Frank tau by direct quadrature of 4 E[C(U, V)] - 1
            expected = 4 * _tau_integral(fam, theta) - 1
        assert cp.kendall_tau(fam, theta) == pytest.approx(expected, abs=1e-6)
        uv = cp.sample_pair(fam, theta, 10**5, np.random.default_rng(9))
        tau = stats.kendalltau(uv[:, 0], uv[:, 1]).statistic
        assert tau == pytest.approx(expected, abs=0.01)

    def test_samples_are_interior(self):
        uv = cp.sample_pair("clayton", 8.0, 5000, np.random.default_rng(1))
        assert np.all((uv > 0) & (uv < 1))

    def test_pair_copula_wrapper(self):
        pc = cp.PairCopula("gumbel", 2.0)
        assert pc.tau == pytest.approx(0.5)
        assert pc.pdf(0.3, 0.4) == pytest.approx(cp.density("gumbel", 2.0, 0.3, 0.4))
        with pytest.raises(cp.CopulaParameterError):
            cp.PairCopula("gumbel", 0.5)


def _tau_integral(fam, theta, n=800):
    g = (np.arange(n) + 0.5) / n
    u, v = np.meshgrid(g, g)
    return float(np.mean(cp.cdf(fam, theta, u, v) * cp.density(fam, theta, u, v)))


@pytest.mark.parametrize("theta", [-17.9, 6.0, 17.5, 30.0])
def test_frank_cdf_matches_high_precision(theta):
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    t = mp.mpf(theta)

    def exact(u, v):
        return -1 / t * mp.log(1 + (mp.exp(-t * u) - 1) * (mp.exp(-t * v) - 1) / (mp.exp(-t) - 1))

    rng = np.random.default_rng(21)
    for u, v in rng.uniform(0.01, 0.99, (50, 2)):
        assert cp.cdf("frank", theta, u, v) == pytest.approx(float(exact(mp.mpf(u), mp.mpf(v))), abs=1e-14)
