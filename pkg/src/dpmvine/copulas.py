"""Bivariate copula families used as vine building blocks.

Every function works on numpy arrays and broadcasts ``theta`` against the
evaluation points, so a vine edge can carry one parameter per observation
(covariate-dependent copulas).

Argument convention: ``C(u, v)`` with ``h(u | v) = dC(u, v)/dv``, i.e. the
h-function is the conditional cdf of the *first* argument given the *second*.
Rotations follow the reflection convention

    90 deg : c(1 - u, v)
    180 deg: c(1 - u, 1 - v)
    270 deg: c(u, 1 - v)

so a 90 or 270 degree rotation turns a positively dependent Archimedean copula
into a negatively dependent one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri, owens_t

__all__ = [
    "U_EPS",
    "FRANK_INDEPENDENCE_TOL",
    "CopulaParameterError",
    "ConvergenceError",
    "Family",
    "PairCopula",
    "parse_family",
    "clamp",
    "check_param",
    "log_density",
    "density",
    "h_function",
    "h_inverse",
    "cdf",
    "sample_pair",
    "kendall_tau",
]

U_EPS = 1e-10
FRANK_INDEPENDENCE_TOL = 1e-6

_BASE_FAMILIES = ("gaussian", "clayton", "gumbel", "frank", "independence")
_ROTATABLE = ("clayton", "gumbel")


class CopulaParameterError(ValueError):
    """Raised when a copula parameter lies outside its family's domain."""


class ConvergenceError(ArithmeticError):
    """Raised when a numerical inversion fails to converge."""


@dataclass(frozen=True)
class Family:
    """A bivariate copula family with an optional rotation in degrees."""

    name: str
    rotation: int = 0

    def __post_init__(self):
        if self.name not in _BASE_FAMILIES:
            raise ValueError(
                f"unknown copula family {self.name!r}; expected one of {_BASE_FAMILIES}"
            )
        if self.rotation not in (0, 90, 180, 270):
            raise ValueError(f"rotation must be 0, 90, 180 or 270, got {self.rotation}")
        if self.rotation and self.name not in _ROTATABLE:
            raise ValueError(f"rotation is only defined for {_ROTATABLE}, got {self.name!r}")

    def transpose(self) -> "Family":
        """Family of the copula with swapped arguments, ``C^T(u, v) = C(v, u)``."""
        if self.rotation in (90, 270):
            return Family(self.name, 360 - self.rotation)
        return self

    def __str__(self) -> str:
        return self.name if self.rotation == 0 else f"{self.name}{self.rotation}"


_FAMILY_RE = re.compile(r"^([a-z]+?)(0|90|180|270)?$")


def parse_family(family) -> Family:
    """Coerce a :class:`Family` or a string such as ``"clayton90"``."""
    if isinstance(family, Family):
        return family
    m = _FAMILY_RE.match(str(family).strip().lower())
    if m is None:
        raise ValueError(f"cannot parse copula family {family!r}")
    return Family(m.group(1), int(m.group(2) or 0))


def clamp(u):
    """Clamp u-data into ``[U_EPS, 1 - U_EPS]``."""
    return np.clip(np.asarray(u, dtype=float), U_EPS, 1.0 - U_EPS)


def check_param(family, theta) -> None:
    """Raise :class:`CopulaParameterError` if ``theta`` is invalid for ``family``."""
    fam = parse_family(family)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise CopulaParameterError(f"{fam}: non-finite parameter")
    if fam.name == "gaussian":
        ok = np.all(np.abs(theta) < 1.0)
        msg = "rho must lie in (-1, 1)"
    elif fam.name == "clayton":
        ok = np.all(theta > 0.0)
        msg = "theta must be > 0"
    elif fam.name == "gumbel":
        ok = np.all(theta >= 1.0)
        msg = "theta must be >= 1"
    else:
        ok = True
        msg = ""
    if not ok:
        bad = theta[...] if theta.ndim == 0 else theta.ravel()[:5]
        raise CopulaParameterError(f"{fam}: {msg} (got {bad})")


# ---------------------------------------------------------------------------
# Base (unrotated) families. Inputs are clamped arrays, broadcasting assumed.
# ---------------------------------------------------------------------------


def _gauss_logpdf(rho, u, v):
    a, b = ndtri(u), ndtri(v)
    r2 = rho * rho
    return -0.5 * np.log1p(-r2) - (r2 * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * (1.0 - r2))


def _gauss_h(rho, u, v):
    return ndtr((ndtri(u) - rho * ndtri(v)) / np.sqrt(1.0 - rho * rho))


def _gauss_hinv(rho, w, v):
    return ndtr(ndtri(w) * np.sqrt(1.0 - rho * rho) + rho * ndtri(v))


def _bvn_cdf(h, k, rho):
    # Owen's T representation of the standard bivariate normal cdf.
    h, k, rho = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (h, k, rho)))
    s = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = (k - rho * h) / (h * s)
        a_k = (h - rho * k) / (k * s)
    # h == 0 (or k == 0) is the limit a -> +-inf with the sign of the numerator
    a_h = np.where(h == 0.0, np.copysign(np.inf, k - rho * h), a_h)
    a_k = np.where(k == 0.0, np.copysign(np.inf, h - rho * k), a_k)
    t_h = np.where(np.isinf(a_h), np.sign(a_h) * 0.25, owens_t(h, np.nan_to_num(a_h)))
    t_k = np.where(np.isinf(a_k), np.sign(a_k) * 0.25, owens_t(k, np.nan_to_num(a_k)))
    hk = h * k
    beta = np.where((hk > 0) | ((hk == 0) & (h + k >= 0)), 0.0, 0.5)
    out = 0.5 * (ndtr(h) + ndtr(k)) - t_h - t_k - beta
    both_zero = (h == 0.0) & (k == 0.0)
    return np.where(both_zero, 0.25 + np.arcsin(rho) / (2.0 * np.pi), out)


def _gauss_cdf(rho, u, v):
    return _bvn_cdf(ndtri(u), ndtri(v), rho)


def _clayton_log_a(theta, lu, lv):
    # log(u^-theta + v^-theta - 1), stable for small and large theta
    with np.errstate(over="ignore", invalid="ignore"):
        small = np.log1p(np.expm1(-theta * lu) + np.expm1(-theta * lv))
        top = np.maximum(-theta * lu, -theta * lv)
        big = np.logaddexp(-theta * lu, -theta * lv) + np.log1p(-np.exp(-np.logaddexp(-theta * lu, -theta * lv)))
    return np.where(top < 30.0, small, big)


def _clayton_logpdf(theta, u, v):
    lu, lv = np.log(u), np.log(v)
    log_a = _clayton_log_a(theta, lu, lv)
    return np.log1p(theta) - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * log_a


def _clayton_h(theta, u, v):
    lu, lv = np.log(u), np.log(v)
    log_a = _clayton_log_a(theta, lu, lv)
    return np.exp(-(theta + 1.0) * lv - (1.0 + 1.0 / theta) * log_a)


def _clayton_hinv(theta, w, v):
    lv = np.log(v)
    b = np.expm1(-theta / (theta + 1.0) * np.log(w))
    z = -theta * lv + np.log(b)
    return np.exp(-np.logaddexp(0.0, z) / theta)


def _clayton_cdf(theta, u, v):
    return np.exp(-_clayton_log_a(theta, np.log(u), np.log(v)) / theta)


def _gumbel_parts(theta, u, v):
    x, y = -np.log(u), -np.log(v)
    lx, ly = np.log(x), np.log(y)
    log_s = np.logaddexp(theta * lx, theta * ly)
    log_a = log_s / theta
    return x, y, lx, ly, log_s, log_a


def _gumbel_logpdf(theta, u, v):
    x, y, lx, ly, log_s, log_a = _gumbel_parts(theta, u, v)
    a = np.exp(log_a)
    return (-a + x + y + (theta - 1.0) * (lx + ly) + (1.0 / theta - 2.0) * log_s
            + np.log(a + theta - 1.0))


def _gumbel_h(theta, u, v):
    x, y, lx, ly, log_s, log_a = _gumbel_parts(theta, u, v)
    return np.exp(-np.exp(log_a) + (1.0 - theta) * log_a + (theta - 1.0) * ly + y)


def _gumbel_cdf(theta, u, v):
    return np.exp(-np.exp(_gumbel_parts(theta, u, v)[5]))


def _bisect(h, w, v, theta, max_iter=200, xtol=1e-15):
    """Vectorised safeguarded bisection for ``h(u | v) = w`` on (1e-12, 1 - 1e-12)."""
    w, v, theta = np.broadcast_arrays(w, v, theta)
    lo = np.full(w.shape, 1e-12)
    hi = np.full(w.shape, 1.0 - 1e-12)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = h(theta, mid, v) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= xtol):
            return 0.5 * (lo + hi)
    worst = float(np.max(hi - lo))
    raise ConvergenceError(
        f"h-inverse bisection did not converge in {max_iter} iterations "
        f"(largest bracket width {worst:.3g})"
    )


def _gumbel_hinv(theta, w, v):
    return _bisect(_gumbel_h, w, v, theta)


# Frank: negative theta handled through C_{-t}(u, v) = u - C_t(u, 1 - v).


def _frank_log_d(t, u, v):
    # log of (1 - e^-t) - (1 - e^-tu)(1 - e^-tv), written as a sum of positives
    log_b = np.log(-np.expm1(-t * v))
    return np.logaddexp(-t * u + log_b, -t * v + np.log(-np.expm1(-t * (1.0 - v))))


def _frank_pos_logpdf(t, u, v):
    return np.log(t) + np.log(-np.expm1(-t)) - t * (u + v) - 2.0 * _frank_log_d(t, u, v)


def _frank_pos_h(t, u, v):
    return np.exp(-t * v + np.log(-np.expm1(-t * u)) - _frank_log_d(t, u, v))


def _frank_pos_hinv(t, w, v):
    num = np.logaddexp(-t * v + np.log1p(-w), -t + np.log(w))
    den = np.logaddexp(np.log(w), np.log1p(-w) - t * v)
    return -(num - den) / t


def _frank_pos_cdf(t, u, v):
    # 1 + (e^-tu - 1)(e^-tv - 1)/(e^-t - 1) = d / (1 - e^-t), free of cancellation
    return -(_frank_log_d(t, u, v) - np.log(-np.expm1(-t))) / t


def _frank_split(theta, v):
    neg = theta < 0
    return np.abs(theta), np.where(neg, 1.0 - v, v), neg


def _frank_logpdf(theta, u, v):
    t, vv, _ = _frank_split(theta, v)
    t_safe = np.where(t < FRANK_INDEPENDENCE_TOL, 1.0, t)
    out = _frank_pos_logpdf(t_safe, u, vv)
    return np.where(t < FRANK_INDEPENDENCE_TOL, 0.0, out)


def _frank_h(theta, u, v):
    t, vv, _ = _frank_split(theta, v)
    t_safe = np.where(t < FRANK_INDEPENDENCE_TOL, 1.0, t)
    out = _frank_pos_h(t_safe, u, vv)
    return np.where(t < FRANK_INDEPENDENCE_TOL, u, out)


def _frank_hinv(theta, w, v):
    t, vv, _ = _frank_split(theta, v)
    t_safe = np.where(t < FRANK_INDEPENDENCE_TOL, 1.0, t)
    out = _frank_pos_hinv(t_safe, w, vv)
    return np.where(t < FRANK_INDEPENDENCE_TOL, w, out)


def _frank_cdf(theta, u, v):
    t, vv, neg = _frank_split(theta, v)
    t_safe = np.where(t < FRANK_INDEPENDENCE_TOL, 1.0, t)
    pos = _frank_pos_cdf(t_safe, u, vv)
    out = np.where(neg, u - pos, pos)
    return np.where(t < FRANK_INDEPENDENCE_TOL, u * v, out)


def _indep_logpdf(theta, u, v):
    return np.zeros(np.broadcast(theta, u, v).shape)


def _indep_h(theta, u, v):
    return np.broadcast_to(u, np.broadcast(theta, u, v).shape).astype(float)


def _indep_hinv(theta, w, v):
    return np.broadcast_to(w, np.broadcast(theta, w, v).shape).astype(float)


def _indep_cdf(theta, u, v):
    return np.broadcast_to(u * v, np.broadcast(theta, u, v).shape).astype(float)


_IMPL = {
    "gaussian": (_gauss_logpdf, _gauss_h, _gauss_hinv, _gauss_cdf),
    "clayton": (_clayton_logpdf, _clayton_h, _clayton_hinv, _clayton_cdf),
    "gumbel": (_gumbel_logpdf, _gumbel_h, _gumbel_hinv, _gumbel_cdf),
    "frank": (_frank_logpdf, _frank_h, _frank_hinv, _frank_cdf),
    "independence": (_indep_logpdf, _indep_h, _indep_hinv, _indep_cdf),
}


def _prepare(family, theta, u, v, validate):
    fam = parse_family(family)
    theta = np.asarray(theta, dtype=float)
    if validate:
        check_param(fam, theta)
    return fam, theta, clamp(u), clamp(v)


# ---------------------------------------------------------------------------
# Public kernel operations
# ---------------------------------------------------------------------------


def log_density(family, theta, u, v, validate=True):
    """Log copula density ``log c(u, v; theta)``."""
    fam, theta, u, v = _prepare(family, theta, u, v, validate)
    f = _IMPL[fam.name][0]
    r = fam.rotation
    if r == 90:
        return f(theta, 1.0 - u, v)
    if r == 180:
        return f(theta, 1.0 - u, 1.0 - v)
    if r == 270:
        return f(theta, u, 1.0 - v)
    return f(theta, u, v)


def density(family, theta, u, v, validate=True):
    """Copula density ``c(u, v; theta)``."""
    return np.exp(log_density(family, theta, u, v, validate))


def h_function(family, theta, u, v, validate=True):
    """Conditional cdf ``h(u | v) = dC(u, v)/dv``."""
    fam, theta, u, v = _prepare(family, theta, u, v, validate)
    h = _IMPL[fam.name][1]
    r = fam.rotation
    if r == 90:
        out = 1.0 - h(theta, 1.0 - u, v)
    elif r == 180:
        out = 1.0 - h(theta, 1.0 - u, 1.0 - v)
    elif r == 270:
        out = h(theta, u, 1.0 - v)
    else:
        out = h(theta, u, v)
    return np.clip(out, 0.0, 1.0)


def h_inverse(family, theta, w, v, validate=True):
    """Solve ``h(u | v) = w`` for ``u``.

    Closed forms are used for the Gaussian, Clayton and Frank families; the
    Gumbel family falls back to bisection and raises :class:`ConvergenceError`
    if the bracket does not shrink within 200 iterations.
    """
    fam, theta, w, v = _prepare(family, theta, w, v, validate)
    hinv = _IMPL[fam.name][2]
    r = fam.rotation
    if r == 90:
        out = 1.0 - hinv(theta, 1.0 - w, v)
    elif r == 180:
        out = 1.0 - hinv(theta, 1.0 - w, 1.0 - v)
    elif r == 270:
        out = hinv(theta, w, 1.0 - v)
    else:
        out = hinv(theta, w, v)
    return clamp(out)


def cdf(family, theta, u, v, validate=True):
    """Copula distribution function ``C(u, v; theta)``."""
    fam, theta, u, v = _prepare(family, theta, u, v, validate)
    c = _IMPL[fam.name][3]
    r = fam.rotation
    if r == 90:
        return v - c(theta, 1.0 - u, v)
    if r == 180:
        return u + v - 1.0 + c(theta, 1.0 - u, 1.0 - v)
    if r == 270:
        return u - c(theta, u, 1.0 - v)
    return c(theta, u, v)


def sample_pair(family, theta, size, rng=None):
    """Draw ``size`` pairs ``(u, v)`` by conditional inversion.

    ``v`` and an auxiliary ``w`` are uniform and ``u = h^{-1}(w | v)``. Columns
    are returned in copula argument order.
    """
    rng = np.random.default_rng(rng)
    v = rng.random(size)
    w = rng.random(size)
    u = h_inverse(family, theta, w, v)
    return np.column_stack([u, clamp(v)])


def _debye1(x):
    if x == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0.0, abs(x))
    return val / abs(x)


def kendall_tau(family, theta) -> float:
    """Population Kendall's tau of a pair copula with scalar parameter."""
    fam = parse_family(family)
    theta = float(theta)
    check_param(fam, theta)
    if fam.name == "gaussian":
        tau = 2.0 / np.pi * np.arcsin(theta)
    elif fam.name == "clayton":
        tau = theta / (theta + 2.0)
    elif fam.name == "gumbel":
        tau = 1.0 - 1.0 / theta
    elif fam.name == "frank":
        if abs(theta) < FRANK_INDEPENDENCE_TOL:
            tau = 0.0
        else:
            # tau(-t) = -tau(t)
            t = abs(theta)
            tau = np.sign(theta) * (1.0 - 4.0 / t * (1.0 - _debye1(t)))
    else:
        tau = 0.0
    if fam.rotation in (90, 270):
        tau = -tau
    return float(tau)


@dataclass(frozen=True)
class PairCopula:
    """A bivariate copula: family tag plus scalar parameter."""

    family: Family
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        check_param(self.family, self.theta)

    def logpdf(self, u, v):
        return log_density(self.family, self.theta, u, v)

    def pdf(self, u, v):
        return density(self.family, self.theta, u, v)

    def cdf(self, u, v):
        return cdf(self.family, self.theta, u, v)

    def hfunc(self, u, v):
        return h_function(self.family, self.theta, u, v)

    def hinv(self, w, v):
        return h_inverse(self.family, self.theta, w, v)

    def sample(self, size, rng=None):
        return sample_pair(self.family, self.theta, size, rng)

    @property
    def tau(self) -> float:
        return kendall_tau(self.family, self.theta)
