import numpy as np
import pytest
from scipy import stats


def random_correlation(dim, rng):
    a = rng.normal(size=(dim, dim + 2))
    cov = a @ a.T
    s = np.sqrt(np.diag(cov))
    return cov / np.outer(s, s)


def partial_correlation(corr, i, j, given):
    """Partial correlation of variables i, j (0-based) given a set, via matrix inversion."""
    idx = [i, j, *given]
    prec = np.linalg.inv(corr[np.ix_(idx, idx)])
    return -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])


def vine_partials(spec, corr):
    return [
        partial_correlation(corr, e.first - 1, e.second - 1, [g - 1 for g in e.given])
        for e in spec.edges
    ]


def gaussian_copula_logpdf(corr, u):
    z = stats.norm.ppf(u)
    dim = corr.shape[0]
    return stats.multivariate_normal(np.zeros(dim), corr).logpdf(z) - stats.norm.logpdf(z).sum(axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion; printed after the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail):
        lines.append((number, f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"))
        print(lines[-1][1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
