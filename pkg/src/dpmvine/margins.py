"""Marginal models that turn raw responses into pseudo-observations.

Three modes are supported:

``known``
    A fixed cdf per column (the identity for data already on the unit scale).
``empirical``
    Rescaled ranks ``rank / (N + 1)``.
``beta``
    Independent Beta margins whose shapes are fitted by random-walk
    Metropolis-Hastings on ``(log a, log b)`` under Gamma priors.
"""

from __future__ import annotations

import csv
import io

import numpy as np
from scipy import special, stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "BetaMarginals",
    "EmpiricalCdf",
    "KnownCdf",
    "MARGIN_MODES",
    "check_unit_interval",
    "fit_beta_margins",
    "to_udata",
]

EPS = 1e-10
MARGIN_MODES = ("known", "empirical", "beta")
SUMMARY_ROWS = ("E", "SD", "q0.025", "q0.975")


def _clamp(u):
    return np.clip(u, EPS, 1.0 - EPS)


def check_unit_interval(Y, open_interval=True, name="raw data") -> np.ndarray:
    """Validate a 2-D array of values in ``(0, 1)`` (or ``[0, 1]``).

    Raises
    ------
    ValueError
        Listing every offending ``(row, column)`` pair, 1-based.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if Y.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {Y.shape}")
    if open_interval:
        bad = ~((Y > 0) & (Y < 1))
        interval = "(0, 1)"
    else:
        bad = ~((Y >= 0) & (Y <= 1))
        interval = "[0, 1]"
    if bad.any():
        rows, cols = np.nonzero(bad)
        where = ", ".join(f"row {r + 1} column {c + 1} ({float(Y[r, c])!r})" for r, c in zip(rows[:20], cols[:20]))
        more = f" and {len(rows) - 20} more" if len(rows) > 20 else ""
        raise ValueError(f"{name} outside {interval} at {where}{more}")
    return Y


class KnownCdf(TransformerMixin, BaseEstimator):
    """Apply a fixed cdf to every column.

    Parameters
    ----------
    cdf : callable, sequence of callables or None
        ``None`` means the data are already uniform and only clamping applies.
    """

    def __init__(self, cdf=None):
        self.cdf = cdf

    def fit(self, Y, y=None):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.cdf is None:
            out = Y.copy()
        elif callable(self.cdf):
            out = np.asarray(self.cdf(Y), dtype=float)
        else:
            if len(self.cdf) != Y.shape[1]:
                raise ValueError(f"got {len(self.cdf)} cdfs for {Y.shape[1]} columns")
            out = np.column_stack([f(Y[:, j]) for j, f in enumerate(self.cdf)])
        check_unit_interval(out, open_interval=False, name="cdf values")
        return _clamp(out)


class EmpiricalCdf(TransformerMixin, BaseEstimator):
    """Rescaled empirical cdf ``#{y_i <= y} / (N + 1)`` per column.

    On the training sample this equals ``rank / (N + 1)`` (average ranks for ties).
    """

    def fit(self, Y, y=None):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if not np.all(np.isfinite(Y)):
            raise ValueError("raw data contain non-finite values")
        self.sorted_ = np.sort(Y, axis=0)
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        n = self.sorted_.shape[0]
        cols = []
        for j in range(Y.shape[1]):
            s = self.sorted_[:, j]
            lo = np.searchsorted(s, Y[:, j], side="left")
            hi = np.searchsorted(s, Y[:, j], side="right")
            # average rank over ties
            cols.append(np.where(hi > lo, (lo + hi + 1) / 2.0, hi + 0.5))
        return _clamp(np.column_stack(cols) / (n + 1))

    def fit_transform(self, Y, y=None):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.fit(Y)
        return _clamp(stats.rankdata(Y, axis=0) / (Y.shape[0] + 1))


def _log_target(log_ab, slog, slog1m, n, shape, rate):
    a, b = np.exp(log_ab)
    lik = (a - 1) * slog + (b - 1) * slog1m - n * special.betaln(a, b) if n else 0.0
    # Gamma(shape, rate) priors plus the log-Jacobian of the exp map
    prior = shape * (log_ab[0] + log_ab[1]) - rate * (a + b)
    return lik + prior


def _mh_chain(y, shape, rate, n_iter, burn_in, scale, adapt, rng):
    y = np.asarray(y, dtype=float)
    n = y.size
    slog = float(np.sum(np.log(y))) if n else 0.0
    slog1m = float(np.sum(np.log1p(-y))) if n else 0.0
    if n > 1 and np.var(y) > 0:
        m, v = y.mean(), y.var()
        k = max(m * (1 - m) / v - 1, 1e-3)
        cur = np.log([m * k, (1 - m) * k])
    else:
        cur = np.zeros(2)
    lp = _log_target(cur, slog, slog1m, n, shape, rate)
    draws = np.empty((n_iter - burn_in, 2))
    acc_window = acc_total = 0
    for t in range(n_iter):
        prop = cur + scale * rng.standard_normal(2)
        lp_prop = _log_target(prop, slog, slog1m, n, shape, rate)
        if np.log(rng.random()) < lp_prop - lp:
            cur, lp = prop, lp_prop
            acc_window += 1
            if t >= burn_in:
                acc_total += 1
        if t < burn_in:
            if adapt and (t + 1) % 50 == 0:
                rate_w = acc_window / 50
                scale *= 0.7 if rate_w < 0.25 else (1.4 if rate_w > 0.40 else 1.0)
                acc_window = 0
        else:
            draws[t - burn_in] = cur
    return np.exp(draws), acc_total / max(n_iter - burn_in, 1), scale


class BetaMarginals(TransformerMixin, BaseEstimator):
    """Independent Beta margins with Gamma priors on both shapes.

    Each margin is fitted separately by random-walk Metropolis-Hastings on
    ``(log a, log b)`` with a bivariate Gaussian proposal whose scale adapts
    during burn-in.

    Parameters
    ----------
    prior_shape, prior_rate : float, default=1.0
        Gamma prior for every ``a_j`` and ``b_j``.
    n_iter : int, default=5000
    burn_in : int, default=1000
    proposal_scale : float, default=0.1
    adapt : bool, default=True
    random_state : int, Generator or None

    Attributes
    ----------
    chains_ : ndarray of shape (d, n_iter - burn_in, 2)
        Kept ``(a, b)`` draws per margin.
    params_ : ndarray of shape (d, 2)
        Posterior means, used by :meth:`transform`.
    acceptance_ : ndarray of shape (d,)
    """

    def __init__(self, prior_shape=1.0, prior_rate=1.0, n_iter=5000, burn_in=1000,
                 proposal_scale=0.1, adapt=True, random_state=None):
        self.prior_shape = prior_shape
        self.prior_rate = prior_rate
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.proposal_scale = proposal_scale
        self.adapt = adapt
        self.random_state = random_state

    def fit(self, Y, y=None):
        if not (self.prior_shape > 0 and self.prior_rate > 0):
            raise ValueError("Gamma prior shape and rate must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must lie in [0, n_iter)")
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 2 and Y.shape[0] == 0:
            Y = Y.reshape(0, Y.shape[1])
        else:
            Y = check_unit_interval(Y)
        rng = np.random.default_rng(self.random_state)
        chains, acc = [], []
        for j in range(Y.shape[1]):
            draws, rate, _ = _mh_chain(Y[:, j], self.prior_shape, self.prior_rate, self.n_iter,
                                       self.burn_in, float(self.proposal_scale), self.adapt, rng)
            chains.append(draws)
            acc.append(rate)
        self.chains_ = np.array(chains)
        self.params_ = self.chains_.mean(axis=1)
        self.acceptance_ = np.array(acc)
        self.n_features_in_ = Y.shape[1]
        return self

    @classmethod
    def from_params(cls, params):
        """Margins fixed at given ``(a_j, b_j)`` rows, without fitting."""
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if params.shape[1] != 2 or not np.all(params > 0):
            raise ValueError("params must be positive (a, b) rows")
        obj = cls()
        obj.params_ = params
        obj.chains_ = params[:, None, :]
        obj.acceptance_ = np.full(len(params), np.nan)
        obj.n_features_in_ = len(params)
        return obj

    def _check_width(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {Y.shape[1]}")
        return Y

    def transform(self, Y):
        check_is_fitted(self)
        Y = check_unit_interval(self._check_width(Y), open_interval=False)
        return _clamp(stats.beta.cdf(Y, self.params_[:, 0], self.params_[:, 1]))

    def inverse_transform(self, U):
        check_is_fitted(self)
        U = self._check_width(U)
        return stats.beta.ppf(U, self.params_[:, 0], self.params_[:, 1])

    def summary(self) -> dict:
        """Posterior table: columns ``a1, b1, ..., ad, bd``; rows ``E, SD, q0.025, q0.975``."""
        check_is_fitted(self)
        table = {}
        for j in range(self.n_features_in_):
            for k, pname in enumerate("ab"):
                draws = self.chains_[j, :, k]
                table[f"{pname}{j + 1}"] = {
                    "E": float(np.mean(draws)),
                    "SD": float(np.std(draws, ddof=1)),
                    "q0.025": float(np.quantile(draws, 0.025)),
                    "q0.975": float(np.quantile(draws, 0.975)),
                }
        return table

    def summary_csv(self) -> str:
        table = self.summary()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", *table])
        for row in SUMMARY_ROWS:
            w.writerow([row, *(f"{table[c][row]:.6g}" for c in table)])
        return buf.getvalue()


def fit_beta_margins(raw, prior_shape=1.0, prior_rate=1.0, n_iter=5000, burn_in=1000,
                     proposal_scale=0.1, random_state=None) -> BetaMarginals:
    """Fit :class:`BetaMarginals` to an ``N x d`` matrix in ``(0, 1)``."""
    return BetaMarginals(prior_shape, prior_rate, n_iter, burn_in, proposal_scale,
                         random_state=random_state).fit(raw)


def to_udata(raw, mode="empirical", margins=None, cdf=None) -> np.ndarray:
    """Map raw responses to pseudo-observations strictly inside ``(0, 1)``.

    Parameters
    ----------
    raw : array-like of shape (N, d)
    mode : {"known", "empirical", "beta"}
    margins : BetaMarginals, optional
        Fitted margins for ``mode="beta"``; fitted on ``raw`` when omitted.
    cdf : callable or sequence of callables, optional
        Column cdfs for ``mode="known"``.
    """
    key = str(mode).lower().replace("cdf", "").replace("fit", "").strip("_")
    if key not in MARGIN_MODES:
        raise ValueError(f"unknown margin mode {mode!r}; expected one of {MARGIN_MODES}")
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if key == "known":
        return KnownCdf(cdf).fit_transform(raw)
    if key == "empirical":
        return EmpiricalCdf().fit_transform(raw)
    if margins is None:
        margins = BetaMarginals().fit(raw)
    return margins.transform(raw)
