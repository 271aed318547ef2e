"""Covariate-dependent edge parameters.

Each vine edge carries a coefficient vector ``beta`` of length ``q``. A
calibration function maps ``(beta, x)`` to a real index ``eta`` and an
inverse link maps ``eta`` into the domain of the edge's copula family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import copulas as cp
from . import vine as vn

__all__ = [
    "CalibrationSpec",
    "LINKS",
    "THETA_CAP",
    "RHO_CAP",
    "ConditionalVine",
    "default_link",
    "edge_param",
    "eta",
    "vine_params_at",
]

THETA_CAP = 1e6
RHO_CAP = 1.0 - 1e-10
_CLAYTON_FLOOR = 1e-10

_KINDS = ("linear", "linear_plus_exp")


@dataclass(frozen=True)
class CalibrationSpec:
    """Calibration function shape.

    Parameters
    ----------
    kind : {"linear", "linear_plus_exp"}
        ``linear``: ``eta = b0 + sum_h b_h x_h`` with ``q = p + 1``.
        ``linear_plus_exp``: ``eta = b0 + b1 x + b2 exp(-b3 x)`` with ``q = 4``;
        only defined for a single covariate.
    n_covariates : int
        Covariate dimension ``p``. Zero gives a constant (covariate-free) edge.
    """

    kind: str = "linear"
    n_covariates: int = 1

    def __post_init__(self):
        kind = str(self.kind).lower().replace("-", "_")
        aliases = {"linearplusexp": "linear_plus_exp", "nonlinear": "linear_plus_exp"}
        kind = aliases.get(kind, kind)
        if kind not in _KINDS:
            raise ValueError(f"unknown calibration kind {self.kind!r}; expected one of {_KINDS}")
        p = int(self.n_covariates)
        if p < 0:
            raise ValueError("n_covariates must be non-negative")
        if kind == "linear_plus_exp" and p != 1:
            raise ValueError("linear_plus_exp calibration requires exactly one covariate")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "n_covariates", p)

    @property
    def n_coef(self) -> int:
        return 4 if self.kind == "linear_plus_exp" else self.n_covariates + 1


def _as_design(x, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if p == 0:
        n = 1 if x.ndim == 0 else x.shape[0]
        return np.zeros((n, 0))
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if p == 1 else x.reshape(1, -1)
    if x.shape[1] != p:
        raise ValueError(f"covariates have {x.shape[1]} columns, calibration expects {p}")
    return x


def eta(spec: CalibrationSpec, beta, x) -> np.ndarray:
    """Calibration index for one edge at covariate rows ``x``.

    ``beta`` has shape ``(q,)`` for a shared coefficient vector or ``(n, q)``
    for one vector per covariate row. Returns an array of shape ``(n,)``.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim not in (1, 2) or beta.shape[-1] != spec.n_coef:
        raise ValueError(f"beta must have length {spec.n_coef}, got shape {beta.shape}")
    X = _as_design(x, spec.n_covariates)
    if beta.ndim == 2 and X.shape[0] == 1 and beta.shape[0] > 1:
        X = np.repeat(X, beta.shape[0], axis=0)
    if spec.kind == "linear":
        return beta[..., 0] + np.sum(beta[..., 1:] * X, axis=-1)
    x1 = X[:, 0]
    with np.errstate(over="ignore", invalid="ignore"):
        return beta[..., 0] + beta[..., 1] * x1 + beta[..., 2] * np.exp(-beta[..., 3] * x1)


def _fisher(e):
    rho = np.tanh(e)
    return np.clip(rho, -RHO_CAP, RHO_CAP), np.abs(rho) > RHO_CAP


def _exp_clayton(e):
    with np.errstate(over="ignore"):
        th = np.exp(e)
    sat = (th > THETA_CAP) | (th < _CLAYTON_FLOOR)
    return np.clip(th, _CLAYTON_FLOOR, THETA_CAP), sat


def _one_plus_exp_gumbel(e):
    with np.errstate(over="ignore"):
        th = 1.0 + np.exp(e)
    return np.minimum(th, THETA_CAP), th > THETA_CAP


def _identity_frank(e):
    e = np.asarray(e, dtype=float)
    return np.clip(e, -THETA_CAP, THETA_CAP), np.abs(e) > THETA_CAP


def _independence(e):
    e = np.asarray(e, dtype=float)
    return np.zeros_like(e), np.zeros(e.shape, dtype=bool)


# link name -> (compatible base family, inverse link)
LINKS = {
    "fisher_gaussian": ("gaussian", _fisher),
    "exp_clayton": ("clayton", _exp_clayton),
    "one_plus_exp_gumbel": ("gumbel", _one_plus_exp_gumbel),
    "identity_frank": ("frank", _identity_frank),
    "independence": ("independence", _independence),
}


def default_link(family) -> str:
    name = cp.parse_family(family).name
    for link, (fam, _) in LINKS.items():
        if fam == name:
            return link
    raise ValueError(f"no link for family {name!r}")  # pragma: no cover


def _check_link(link: str, family=None) -> str:
    key = str(link).lower().replace("-", "_")
    if key not in LINKS:
        raise ValueError(f"unknown link {link!r}; expected one of {sorted(LINKS)}")
    if family is not None and LINKS[key][0] != cp.parse_family(family).name:
        raise ValueError(f"link {link!r} is not compatible with family {family}")
    return key


def edge_param(link: str, eta_value):
    """Apply an inverse link.

    Returns
    -------
    theta : ndarray
        Copula parameter, always inside the family's domain.
    saturated : ndarray of bool
        True where ``eta`` fell outside the representable range (or was NaN)
        and the parameter was clipped to its cap.
    """
    key = _check_link(link)
    e = np.asarray(eta_value, dtype=float)
    bad = np.isnan(e)
    theta, sat = LINKS[key][1](np.where(bad, 0.0, e))
    return theta, sat | bad


def vine_params_at(spec: CalibrationSpec, betas, links: Sequence[str], x):
    """Per-edge copula parameters at covariate rows ``x``.

    Parameters
    ----------
    spec : CalibrationSpec
    betas : array-like of shape (n_edges, q) or (n, n_edges, q)
    links : sequence of str, length n_edges
    x : array-like of shape (n, p)

    Returns
    -------
    params : list of ndarray, each of shape (n,)
    saturated : bool
        Whether any edge hit a link cap.
    """
    betas = np.asarray(betas, dtype=float)
    if betas.ndim not in (2, 3) or betas.shape[-2] != len(links):
        raise ValueError(f"betas must have shape ({len(links)}, q), got {betas.shape}")
    params, saturated = [], False
    for e, link in enumerate(links):
        th, sat = edge_param(link, eta(spec, betas[..., e, :], x))
        params.append(th)
        saturated = saturated or bool(np.any(sat))
    return params, saturated


class ConditionalVine:
    """A vine whose edge parameters depend on covariates.

    Parameters
    ----------
    vine_spec : VineSpec
    calibration : CalibrationSpec
    links : sequence of str, optional
        One link per edge. Defaults to the canonical link of each family.
    """

    def __init__(self, vine_spec: vn.VineSpec, calibration: CalibrationSpec, links=None):
        self.vine_spec = vine_spec
        self.calibration = calibration
        if links is None:
            links = [default_link(f) for f in vine_spec.families]
        if len(links) != vine_spec.n_edges:
            raise ValueError(f"expected {vine_spec.n_edges} links, got {len(links)}")
        self.links = tuple(_check_link(l, f) for l, f in zip(links, vine_spec.families))

    @property
    def n_edges(self) -> int:
        return self.vine_spec.n_edges

    @property
    def n_coef(self) -> int:
        return self.calibration.n_coef

    def reshape_beta(self, beta) -> np.ndarray:
        """Coerce a flat or ``(n_edges, q)`` coefficient array to ``(n_edges, q)``."""
        beta = np.asarray(beta, dtype=float)
        shape = (self.n_edges, self.n_coef)
        if beta.size != shape[0] * shape[1]:
            raise ValueError(f"expected {shape[0] * shape[1]} coefficients, got {beta.size}")
        return beta.reshape(shape)

    def params(self, beta, x):
        return vine_params_at(self.calibration, self.reshape_beta(beta), self.links, x)

    def params_rows(self, betas, x):
        """Edge parameters with a separate coefficient block per row; ``betas`` is ``(n, n_edges, q)``."""
        return vine_params_at(self.calibration, betas, self.links, x)

    def logpdf_rows(self, betas, u, x) -> np.ndarray:
        """Row-wise log-density where row ``i`` uses ``betas[i]``; saturated rows get ``-inf``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        sat = np.zeros(u.shape[0], dtype=bool)
        params = []
        for e, link in enumerate(self.links):
            th, s = edge_param(link, eta(self.calibration, betas[:, e, :], x))
            params.append(th)
            sat |= s
        out = vn.log_density(self.vine_spec, params, u, validate=False)
        return np.where(sat, -np.inf, out)

    def logpdf(self, beta, u, x) -> np.ndarray:
        """Conditional copula log-density at rows ``u`` given covariates ``x``.

        Rows whose edge parameters saturate a link cap get ``-inf``.
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        beta = self.reshape_beta(beta)
        return self.logpdf_rows(np.broadcast_to(beta, (u.shape[0],) + beta.shape), u, x)

    def conditional_cdfs(self, beta, u, x) -> list:
        params, _ = self.params(beta, x)
        return vn.conditional_cdfs(self.vine_spec, params, u, validate=False)

    def simulate(self, beta, x, rng=None) -> np.ndarray:
        """One u-row per covariate row of ``x``."""
        X = _as_design(x, self.calibration.n_covariates)
        params, _ = self.params(beta, X)
        return vn.simulate(self.vine_spec, params, X.shape[0], rng)
