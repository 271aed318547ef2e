"""Dirichlet-process mixture of conditional vine copulas and its MCMC sampler.

Each cluster ``m`` carries a coefficient block ``beta_m`` of shape
``(n_edges, q)`` for the conditional vine and a covariate parameter vector
``phi_m``. The kernel of observation ``i`` under cluster ``m`` is
``f(x_i | phi_m) * c(u_i | x_i, beta_m)``.

One sweep updates cluster memberships with the no-gaps scheme (a single
auxiliary centering-measure draw per observation), then refreshes covariate
parameters by conjugate Gibbs draws and coefficient blocks by random-walk
Metropolis-Hastings, one edge at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special
from sklearn.utils import check_array

from . import vine as vn
from .calibration import ConditionalVine

__all__ = [
    "BernoulliCovariate",
    "COVARIATE_MODELS",
    "CenteringMeasure",
    "ClusterState",
    "DPConfig",
    "DPMixture",
    "Dataset",
    "DiscreteCoefPrior",
    "GaussianCoefPrior",
    "NormalCovariate",
    "PosteriorTrace",
    "SamplerError",
    "TraceRecord",
    "assignment_step",
    "cluster_param_step",
    "conditional_cdf_step",
    "predictive_sample",
    "run_chain",
]


class SamplerError(RuntimeError):
    """Failure inside a sweep; carries the iteration index when known."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


# --------------------------------------------------------------------------
# covariate models


class NormalCovariate:
    """Normal covariate model with independent priors on its mean and variance.

    Component parameters are ``(mean, variance)`` with
    ``mean ~ Normal(mu0, s0sq)`` and ``variance ~ InvGamma(a, b)``.
    """

    kind = "normal"
    n_params = 2

    def __init__(self, mu0=0.0, s0sq=1.0, a=2.0, b=1.0):
        if not (s0sq > 0 and a > 0 and b > 0):
            raise ValueError("NormalCovariate requires s0sq, a, b > 0")
        self.mu0, self.s0sq, self.a, self.b = float(mu0), float(s0sq), float(a), float(b)

    @classmethod
    def from_data(cls, x):
        """Prior centred on the sample mean with scale set by the sample variance."""
        x = np.asarray(x, dtype=float)
        v = float(np.var(x)) if x.size > 1 and np.var(x) > 0 else 1.0
        return cls(float(np.mean(x)) if x.size else 0.0, v, 2.0, v)

    def sample_prior(self, rng, size):
        mu = rng.normal(self.mu0, math.sqrt(self.s0sq), size)
        var = 1.0 / rng.gamma(self.a, 1.0 / self.b, size)
        return np.column_stack([mu, var])

    def log_prior(self, phi):
        phi = np.asarray(phi, dtype=float)
        mu, var = phi[..., 0], phi[..., 1]
        lp_mu = -0.5 * (math.log(2 * math.pi * self.s0sq) + (mu - self.mu0) ** 2 / self.s0sq)
        lp_var = self.a * math.log(self.b) - special.gammaln(self.a) - (self.a + 1) * np.log(var) - self.b / var
        return lp_mu + lp_var

    def logpdf(self, phi, x):
        phi = np.asarray(phi, dtype=float)
        mu, var = phi[..., 0], phi[..., 1]
        return -0.5 * (np.log(2 * math.pi * var) + (x - mu) ** 2 / var)

    def gibbs(self, phi, x, rng):
        n = x.size
        var = phi[1]
        prec = 1.0 / self.s0sq + n / var
        mean = (self.mu0 / self.s0sq + x.sum() / var) / prec
        mu = rng.normal(mean, 1.0 / math.sqrt(prec))
        rate = self.b + 0.5 * float(np.sum((x - mu) ** 2))
        var = 1.0 / rng.gamma(self.a + 0.5 * n, 1.0 / rate)
        return np.array([mu, var])

    def simulate(self, phi, rng):
        phi = np.atleast_2d(phi)
        return rng.normal(phi[:, 0], np.sqrt(phi[:, 1]))

    def to_dict(self):
        return {"kind": self.kind, "mu0": self.mu0, "s0sq": self.s0sq, "a": self.a, "b": self.b}


class BernoulliCovariate:
    """Binary covariate with a Beta(a, b) prior on the success probability."""

    kind = "bernoulli"
    n_params = 1

    def __init__(self, a=1.0, b=1.0):
        if not (a > 0 and b > 0):
            raise ValueError("BernoulliCovariate requires a, b > 0")
        self.a, self.b = float(a), float(b)

    @classmethod
    def from_data(cls, x):
        return cls()

    def sample_prior(self, rng, size):
        return rng.beta(self.a, self.b, size)[:, None]

    def log_prior(self, phi):
        p = np.asarray(phi, dtype=float)[..., 0]
        return (self.a - 1) * np.log(p) + (self.b - 1) * np.log1p(-p) - special.betaln(self.a, self.b)

    def logpdf(self, phi, x):
        p = np.asarray(phi, dtype=float)[..., 0]
        return special.xlogy(x, p) + special.xlog1py(1 - x, -p)

    def gibbs(self, phi, x, rng):
        k = float(np.sum(x))
        return np.array([rng.beta(self.a + k, self.b + x.size - k)])

    def simulate(self, phi, rng):
        phi = np.atleast_2d(phi)
        return (rng.random(phi.shape[0]) < phi[:, 0]).astype(float)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


COVARIATE_MODELS = {"normal": NormalCovariate, "bernoulli": BernoulliCovariate}


# --------------------------------------------------------------------------
# coefficient priors


class GaussianCoefPrior:
    """Multivariate normal prior on the flattened ``(n_edges, q)`` coefficient block."""

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=float)
        if mean.ndim != 2:
            raise ValueError("mean must have shape (n_edges, q)")
        k = mean.size
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (k, k):
            raise ValueError(f"cov must have shape ({k}, {k}), got {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise ValueError("cov must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("cov must be positive definite") from exc
        self.mean, self.cov = mean, cov
        self._prec = np.linalg.inv(cov)
        self._log_norm = -0.5 * k * math.log(2 * math.pi) - np.log(np.diag(self._chol)).sum()

    @classmethod
    def isotropic(cls, n_edges, n_coef, mean=0.0, sd=1.0):
        mean = np.broadcast_to(np.asarray(mean, dtype=float), (n_edges, n_coef)).copy()
        return cls(mean, np.eye(n_edges * n_coef) * float(sd) ** 2)

    @property
    def shape(self):
        return self.mean.shape

    def sample(self, rng, size):
        z = rng.standard_normal((size, self.mean.size))
        return self.mean + (z @ self._chol.T).reshape((size,) + self.shape)

    def logpdf(self, beta):
        d = np.asarray(beta, dtype=float).reshape(-1) - self.mean.reshape(-1)
        return self._log_norm - 0.5 * float(d @ self._prec @ d)

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class DiscreteCoefPrior:
    """Prior supported on a finite set of coefficient blocks.

    Useful for exact enumeration checks: the Metropolis step proposes a
    uniformly chosen different atom.
    """

    def __init__(self, atoms, probs=None):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim != 3 or atoms.shape[0] < 1:
            raise ValueError("atoms must have shape (n_atoms, n_edges, q)")
        probs = np.full(atoms.shape[0], 1.0 / atoms.shape[0]) if probs is None else np.asarray(probs, float)
        if probs.shape != (atoms.shape[0],) or np.any(probs <= 0) or not np.isclose(probs.sum(), 1):
            raise ValueError("probs must be positive and sum to one")
        self.atoms, self.probs = atoms, probs

    @property
    def shape(self):
        return self.atoms.shape[1:]

    def atom_index(self, beta) -> int:
        hit = np.flatnonzero(np.all(self.atoms == np.asarray(beta), axis=(1, 2)))
        return int(hit[0]) if hit.size else -1

    def sample(self, rng, size):
        return self.atoms[rng.choice(len(self.probs), size=size, p=self.probs)].copy()

    def logpdf(self, beta):
        j = self.atom_index(beta)
        return math.log(self.probs[j]) if j >= 0 else -math.inf

    def to_dict(self):
        return {"kind": "discrete", "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


@dataclass
class CenteringMeasure:
    """Base measure of the Dirichlet process: coefficient prior times covariate priors."""

    coef: object
    covariates: tuple = ()

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        bounds = np.cumsum([0] + [c.n_params for c in self.covariates])
        self._slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def n_phi(self) -> int:
        return sum(c.n_params for c in self.covariates)

    def sample(self, rng, size):
        betas = self.coef.sample(rng, size)
        if self.covariates:
            phis = np.hstack([c.sample_prior(rng, size) for c in self.covariates])
        else:
            phis = np.zeros((size, 0))
        return betas, phis

    def covariate_logpdf(self, phi, X) -> np.ndarray:
        """``log f(x | phi)`` per row; ``phi`` is one vector or one per row."""
        out = np.zeros(X.shape[0])
        phi = np.asarray(phi, dtype=float)
        for h, (c, sl) in enumerate(zip(self.covariates, self._slices)):
            out = out + c.logpdf(phi[..., sl], X[:, h])
        return out

    def gibbs_phi(self, phi, X, rng):
        if not self.covariates:
            return phi
        return np.concatenate([c.gibbs(phi[sl], X[:, h], rng) for h, (c, sl) in
                               enumerate(zip(self.covariates, self._slices))])

    def simulate_covariates(self, phis, rng):
        phis = np.atleast_2d(phis)
        if not self.covariates:
            return np.zeros((phis.shape[0], 0))
        return np.column_stack([c.simulate(phis[:, sl], rng) for c, sl in zip(self.covariates, self._slices)])

    def phi_names(self):
        names = []
        for h, c in enumerate(self.covariates):
            names += [f"x{h + 1}_mean", f"x{h + 1}_var"] if c.kind == "normal" else [f"x{h + 1}_prob"]
        return names


# --------------------------------------------------------------------------
# data, model, state


@dataclass
class Dataset:
    """Pseudo-observations ``u`` of shape ``(N, d)`` and covariates ``x`` of shape ``(N, p)``."""

    u: np.ndarray
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        u = check_array(self.u, ensure_min_features=2)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("u-data must lie in [0, 1]")
        self.u = np.clip(u, 1e-10, 1 - 1e-10)
        if self.x is None:
            self.x = np.zeros((u.shape[0], 0))
        else:
            x = np.asarray(self.x, dtype=float)
            x = x.reshape(-1, 1) if x.ndim == 1 else x
            if x.shape[1] > 0:
                x = check_array(x)
            if x.shape[0] != u.shape[0]:
                raise ValueError(f"u has {u.shape[0]} rows but x has {x.shape[0]}")
            self.x = x

    @property
    def n_obs(self) -> int:
        return self.u.shape[0]


class DPMixture:
    """Kernel bundle: a conditional vine, its centering measure, and a likelihood switch.

    Parameters
    ----------
    vine : ConditionalVine
    g0 : CenteringMeasure
    use_likelihood : bool, default=True
        When False every kernel evaluates to 1, so the sampler explores the
        prior (used to check the clustering prior).
    """

    def __init__(self, vine: ConditionalVine, g0: CenteringMeasure, use_likelihood: bool = True):
        if tuple(g0.coef.shape) != (vine.n_edges, vine.n_coef):
            raise ValueError(
                f"coefficient prior has shape {tuple(g0.coef.shape)}, vine needs {(vine.n_edges, vine.n_coef)}"
            )
        if len(g0.covariates) != vine.calibration.n_covariates:
            raise ValueError("number of covariate priors must match the calibration's covariate count")
        self.vine, self.g0, self.use_likelihood = vine, g0, use_likelihood

    def copula_loglik(self, beta, u, x) -> float:
        if not self.use_likelihood or u.shape[0] == 0:
            return 0.0
        return float(np.sum(self.vine.logpdf(beta, u, x)))

    def log_kernel(self, beta, phi, data: Dataset) -> np.ndarray:
        """Log kernel of every observation under one cluster's parameters."""
        if not self.use_likelihood:
            return np.zeros(data.n_obs)
        return self.vine.logpdf(beta, data.u, data.x) + self.g0.covariate_logpdf(phi, data.x)

    def log_kernel_rows(self, betas, phis, data: Dataset) -> np.ndarray:
        """Log kernel of row ``i`` under ``(betas[i], phis[i])``."""
        if not self.use_likelihood:
            return np.zeros(data.n_obs)
        return self.vine.logpdf_rows(betas, data.u, data.x) + self.g0.covariate_logpdf(phis, data.x)


@dataclass
class ClusterState:
    """Cluster memberships (0-based, ordered by first appearance) and per-cluster parameters."""

    labels: np.ndarray
    betas: list
    phis: list

    @property
    def n_clusters(self) -> int:
        return len(self.betas)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def check(self):
        """Raise if labels have gaps or are not ordered by first appearance."""
        _, first = np.unique(self.labels, return_index=True)
        seen = self.labels[np.sort(first)]
        if not np.array_equal(seen, np.arange(self.n_clusters)):
            raise SamplerError("cluster labels are not contiguous in order of appearance")
        if len(self.phis) != self.n_clusters:
            raise SamplerError("parameter lists are out of sync with labels")

    def copy(self):
        return ClusterState(self.labels.copy(), [b.copy() for b in self.betas], [p.copy() for p in self.phis])

    @classmethod
    def single_cluster(cls, data: Dataset, model: DPMixture, rng):
        """Everything in one cluster at the prior centre, covariate parameters drawn given all data."""
        g0 = model.g0
        beta = g0.coef.mean.copy() if hasattr(g0.coef, "mean") else g0.coef.atoms[0].copy()
        _, phi = g0.sample(rng, 1)
        x = data.x if model.use_likelihood else data.x[:0]
        phi = g0.gibbs_phi(phi[0], x, rng)
        return cls(np.zeros(data.n_obs, dtype=int), [beta], [phi])


def _random_state(data, model, n_init, rng):
    k = max(1, min(int(n_init), data.n_obs))
    labels = np.concatenate([np.arange(k), rng.integers(k, size=data.n_obs - k)])
    rng.shuffle(labels)
    betas, phis = model.g0.sample(rng, k)
    for m in range(k):
        # redraw parameters that leave a member with zero kernel
        rows = labels == m
        for _ in range(100):
            ll = model.log_kernel(betas[m], phis[m], data)[rows]
            if np.all(np.isfinite(ll)):
                break
            b, p = model.g0.sample(rng, 1)
            betas[m], phis[m] = b[0], p[0]
        else:
            raise SamplerError("could not draw initial cluster parameters with finite likelihood")
    L = np.zeros((data.n_obs, k))
    labels, betas, phis, _ = _compact(labels, list(betas), list(phis), L)
    return ClusterState(labels, betas, phis)


def _compact(labels, betas, phis, L):
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = np.empty(len(betas), dtype=int)
    remap[order] = np.arange(len(order))
    return remap[labels], [betas[o] for o in order], [phis[o] for o in order], L[:, order]


def _sample_log_weights(logw, rng) -> int:
    top = np.max(logw)
    if top == -np.inf:
        raise SamplerError("all assignment weights are zero")
    w = np.exp(logw - top)
    c = np.cumsum(w)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(w) - 1))


def kernel_matrix(state: ClusterState, data: Dataset, model: DPMixture) -> np.ndarray:
    """``(N, n_clusters)`` matrix of log kernels."""
    return np.column_stack([model.log_kernel(b, p, data) for b, p in zip(state.betas, state.phis)])


# --------------------------------------------------------------------------
# sweep components


def assignment_step(state: ClusterState, data: Dataset, model: DPMixture, total_mass: float, rng,
                    loglik: Optional[np.ndarray] = None):
    """One scan of cluster-membership updates.

    Parameters
    ----------
    state : ClusterState
    data : Dataset
    model : DPMixture
    total_mass : float
        Dirichlet-process mass ``M``.
    rng : numpy.random.Generator
    loglik : ndarray of shape (N, n_clusters), optional
        Precomputed log kernels for the current clusters.

    Returns
    -------
    state : ClusterState
        New state with labels compacted to order of first appearance.
    loglik : ndarray
        Log-kernel matrix aligned with the returned clusters.
    """
    if total_mass <= 0:
        raise ValueError("total mass must be positive")
    labels = state.labels.copy()
    betas, phis = list(state.betas), list(state.phis)
    L = kernel_matrix(state, data, model) if loglik is None else loglik
    counts = np.bincount(labels, minlength=len(betas)).astype(float)
    aux_b, aux_p = model.g0.sample(rng, data.n_obs)
    aux_ll = model.log_kernel_rows(aux_b, aux_p, data)
    log_mass = math.log(total_mass)

    for i in range(data.n_obs):
        m = labels[i]
        counts[m] -= 1
        k = len(betas)
        if counts[m] == 0:
            # singleton: stay put with probability (k-1)/k, otherwise its own
            # parameters serve as the new-cluster candidate
            if rng.random() < (k - 1) / k:
                counts[m] = 1
                continue
            cand_b, cand_p, cand_col = betas.pop(m), phis.pop(m), L[:, m]
            L = np.delete(L, m, axis=1)
            counts = np.delete(counts, m)
            labels[labels > m] -= 1
            cand_i = cand_col[i]
        else:
            cand_b, cand_p, cand_col = aux_b[i], aux_p[i], None
            cand_i = aux_ll[i]
        k_minus = len(betas)
        logw = np.empty(k_minus + 1)
        with np.errstate(divide="ignore"):
            logw[:k_minus] = np.log(counts) + L[i]
        logw[k_minus] = log_mass - math.log(k_minus + 1) + cand_i
        j = _sample_log_weights(logw, rng)
        if j == k_minus:
            if cand_col is None:
                cand_col = model.log_kernel(cand_b, cand_p, data)
            betas.append(np.array(cand_b))
            phis.append(np.array(cand_p))
            L = np.column_stack([L, cand_col])
            counts = np.append(counts, 1.0)
        else:
            counts[j] += 1
        labels[i] = j

    labels, betas, phis, L = _compact(labels, betas, phis, L)
    return ClusterState(labels, betas, phis), L


@dataclass
class _AcceptStats:
    tries: np.ndarray
    accepts: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    def rates(self):
        with np.errstate(invalid="ignore"):
            return np.where(self.tries > 0, self.accepts / np.maximum(self.tries, 1), np.nan)


def cluster_param_step(state: ClusterState, data: Dataset, model: DPMixture, scales, rng,
                       stats: Optional[_AcceptStats] = None) -> ClusterState:
    """Refresh covariate parameters (Gibbs) and coefficient blocks (Metropolis-Hastings).

    Gaussian coefficient priors use a random-walk proposal on one edge's
    ``q`` coefficients at a time with standard deviation ``scales[edge]``.
    Discrete priors propose a uniformly chosen different atom for the whole
    block. Proposals whose edge parameters saturate a link cap have zero
    likelihood and are rejected.
    """
    g0 = model.g0
    prior = g0.coef
    n_edges = model.vine.n_edges
    scales = np.broadcast_to(np.asarray(scales, dtype=float), (n_edges,))
    betas, phis = [b.copy() for b in state.betas], [p.copy() for p in state.phis]
    discrete = isinstance(prior, DiscreteCoefPrior)
    for m in range(state.n_clusters):
        rows = np.flatnonzero(state.labels == m)
        u, x = data.u[rows], data.x[rows]
        phis[m] = g0.gibbs_phi(phis[m], x if model.use_likelihood else x[:0], rng)
        beta = betas[m]
        cur_ll = model.copula_loglik(beta, u, x)
        cur_lp = prior.logpdf(beta)
        if discrete:
            n_atoms = prior.atoms.shape[0]
            if n_atoms > 1:
                j = prior.atom_index(beta)
                k = rng.integers(n_atoms - 1)
                k += k >= j
                prop = prior.atoms[k].copy()
                new_ll = model.copula_loglik(prop, u, x)
                new_lp = prior.logpdf(prop)
                if np.isfinite(new_ll) and math.log(rng.random()) < new_ll - cur_ll + new_lp - cur_lp:
                    beta = prop
            betas[m] = beta
            continue
        for e in range(n_edges):
            prop = beta.copy()
            prop[e] += scales[e] * rng.standard_normal(beta.shape[1])
            new_ll = model.copula_loglik(prop, u, x)
            new_lp = prior.logpdf(prop)
            ok = np.isfinite(new_ll) and math.log(rng.random()) < new_ll - cur_ll + new_lp - cur_lp
            if stats is not None:
                stats.tries[e] += 1
                stats.accepts[e] += ok
            if ok:
                beta, cur_ll, cur_lp = prop, new_ll, new_lp
        betas[m] = beta
    return ClusterState(state.labels.copy(), betas, phis)


def conditional_cdf_step(state: ClusterState, data: Dataset, model: DPMixture) -> list:
    """Per-observation edge arguments under each observation's current cluster.

    Returns a list aligned with the vine's edges; entry ``e`` is a pair of
    arrays of shape ``(N,)``.
    """
    n = data.n_obs
    out = [(np.empty(n), np.empty(n)) for _ in range(model.vine.n_edges)]
    for m in range(state.n_clusters):
        rows = np.flatnonzero(state.labels == m)
        if rows.size == 0:
            continue
        tables = model.vine.conditional_cdfs(state.betas[m], data.u[rows], data.x[rows])
        for e, (a, b) in enumerate(tables):
            out[e][0][rows] = a
            out[e][1][rows] = b
    return out


# --------------------------------------------------------------------------
# chain driver and trace


@dataclass
class DPConfig:
    """Run settings.

    Parameters
    ----------
    total_mass : float, default=1.0
        Dirichlet-process mass ``M``.
    n_iter : int, default=1000
        Total sweeps including burn-in.
    burn_in : int, default=200
    thin : int, default=1
    proposal_scale : float or sequence of float, default=0.2
        Initial random-walk standard deviation per edge.
    adapt : bool, default=True
        Tune proposal scales during burn-in toward 25-40% acceptance.
    adapt_every : int, default=50
    n_init_clusters : int, default=1
        Starting partition. ``1`` puts every observation in one cluster at the
        prior centre; larger values assign observations uniformly at random
        to that many clusters with parameters drawn from the centering measure.
    seed : int or None
    """

    total_mass: float = 1.0
    n_iter: int = 1000
    burn_in: int = 200
    thin: int = 1
    proposal_scale: object = 0.2
    adapt: bool = True
    adapt_every: int = 50
    n_init_clusters: int = 1
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.total_mass > 0:
            raise ValueError("total_mass must be positive")
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("n_iter >= 1, burn_in >= 0 and thin >= 1 are required")
        if self.burn_in >= self.n_iter:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than n_iter ({self.n_iter})")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be >= 1")
        if self.n_init_clusters < 1:
            raise ValueError("n_init_clusters must be >= 1")

    @property
    def n_kept(self) -> int:
        return -(-(self.n_iter - self.burn_in) // self.thin)


@dataclass
class TraceRecord:
    iteration: int
    psi: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    loglik: float

    @property
    def n(self) -> int:
        return len(self.weights)

    def to_dict(self):
        return {
            "iteration": int(self.iteration),
            "n": self.n,
            "psi": self.psi.tolist(),
            "beta": self.beta.tolist(),
            "phi": self.phi.tolist(),
            "weights": self.weights.tolist(),
            "loglik": float(self.loglik),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            int(d["iteration"]),
            np.asarray(d["psi"], dtype=int),
            np.asarray(d["beta"], dtype=float),
            np.asarray(d["phi"], dtype=float),
            np.asarray(d["weights"], dtype=float),
            float(d["loglik"]),
        )


@dataclass
class PosteriorTrace:
    """Kept iterations of a chain.

    ``psi`` in each record holds 1-based cluster labels in order of first
    appearance; ``beta`` has shape ``(n, n_edges, q)`` and ``phi`` shape
    ``(n, n_phi)``; ``weights`` are the occupancy proportions ``N_m / N``.
    """

    records: list
    total_mass: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def n_obs(self) -> int:
        return len(self.records[0].psi)

    @property
    def n_clusters(self) -> np.ndarray:
        return np.array([r.n for r in self.records])

    def modal_n(self) -> int:
        """Most frequent cluster count; ties resolve to the smallest count."""
        vals, cnt = np.unique(self.n_clusters, return_counts=True)
        return int(vals[np.argmax(cnt)])

    def co_clustering(self) -> np.ndarray:
        psi = np.array([r.psi for r in self.records])
        out = np.zeros((psi.shape[1], psi.shape[1]))
        for row in psi:
            out += row[:, None] == row[None, :]
        return out / len(psi)

    def point_estimate_index(self) -> int:
        """Index of the kept partition closest to the co-clustering matrix (least squares)."""
        pi = self.co_clustering()
        best, best_loss = 0, np.inf
        for k, r in enumerate(self.records):
            loss = np.sum(((r.psi[:, None] == r.psi[None, :]) - pi) ** 2)
            if loss < best_loss:
                best, best_loss = k, loss
        return best

    def point_estimate(self) -> np.ndarray:
        """Least-squares clustering: the kept partition closest to the co-clustering matrix."""
        return self.records[self.point_estimate_index()].psi.copy()

    def align(self, reference=None) -> dict:
        """Per-iteration parameters matched to the clusters of a reference partition.

        For each kept iteration and each reference cluster, the iteration's
        cluster holding most of that reference cluster's members supplies the
        draw. ``reference`` defaults to :meth:`point_estimate`.

        Returns
        -------
        dict with ``beta`` of shape ``(T, C, n_edges, q)``, ``phi`` of shape
        ``(T, C, n_phi)``, ``weight`` of shape ``(T, C)`` and ``size`` (members
        per reference cluster).
        """
        ref = self.point_estimate() if reference is None else np.asarray(reference)
        clusters = np.unique(ref)
        beta, phi, weight = [], [], []
        for r in self.records:
            picks = [np.bincount(r.psi[ref == c] - 1, minlength=r.n).argmax() for c in clusters]
            beta.append(r.beta[picks])
            phi.append(r.phi[picks])
            weight.append(r.weights[picks])
        return {"beta": np.array(beta), "phi": np.array(phi), "weight": np.array(weight),
                "size": np.array([np.sum(ref == c) for c in clusters])}

    def summarize(self, n: Optional[int] = None, names=None) -> list:
        """Posterior summaries per cluster parameter over iterations with ``n`` clusters.

        Returns a list of dicts with keys ``cluster``, ``parameter``, ``mean``,
        ``sd``, ``q025``, ``q975``. ``n`` defaults to the modal count.
        """
        n = self.modal_n() if n is None else int(n)
        recs = [r for r in self.records if r.n == n]
        if not recs:
            return []
        beta = np.array([r.beta for r in recs])
        phi = np.array([r.phi for r in recs])
        w = np.array([r.weights for r in recs])
        n_edges, q = beta.shape[2], beta.shape[3]
        edge_names = (names or {}).get("edges") or [f"edge{e + 1}" for e in range(n_edges)]
        phi_names = (names or {}).get("phi") or [f"phi{j + 1}" for j in range(phi.shape[2])]
        rows = []

        def add(cluster, pname, draws):
            rows.append({
                "cluster": cluster,
                "parameter": pname,
                "mean": float(np.mean(draws)),
                "sd": float(np.std(draws, ddof=1)) if len(draws) > 1 else 0.0,
                "q025": float(np.quantile(draws, 0.025)),
                "q975": float(np.quantile(draws, 0.975)),
            })

        for m in range(n):
            for e in range(n_edges):
                for j in range(q):
                    add(m + 1, f"beta{j}[{edge_names[e]}]", beta[:, m, e, j])
            for j in range(phi.shape[2]):
                add(m + 1, phi_names[j], phi[:, m, j])
            add(m + 1, "weight", w[:, m])
        return rows


def _record(t, state, L, data):
    n = state.n_clusters
    ll = float(np.sum(L[np.arange(data.n_obs), state.labels]))
    return TraceRecord(
        iteration=t,
        psi=state.labels + 1,
        beta=np.array(state.betas),
        phi=np.array(state.phis).reshape(n, -1),
        weights=state.counts / data.n_obs,
        loglik=ll,
    )


def run_chain(data: Dataset, model: DPMixture, config: DPConfig, state: Optional[ClusterState] = None,
              callback=None) -> PosteriorTrace:
    """Run the sampler and return the kept iterations.

    A sweep is: membership update, then covariate parameters and
    coefficient blocks for every occupied cluster. Runs are deterministic
    given ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    if state is None:
        if config.n_init_clusters == 1:
            state = ClusterState.single_cluster(data, model, rng)
        else:
            state = _random_state(data, model, config.n_init_clusters, rng)
    scales = np.array(np.broadcast_to(np.asarray(config.proposal_scale, dtype=float), (model.vine.n_edges,)))
    window = _AcceptStats.zeros(model.vine.n_edges)
    total = _AcceptStats.zeros(model.vine.n_edges)
    records = []
    L = None
    for t in range(config.n_iter):
        try:
            state, L = assignment_step(state, data, model, config.total_mass, rng, L)
            stats = _AcceptStats.zeros(model.vine.n_edges)
            state = cluster_param_step(state, data, model, scales, rng, stats)
            L = kernel_matrix(state, data, model)
        except SamplerError as exc:
            raise SamplerError(str(exc), t) from exc
        except (ValueError, ArithmeticError, FloatingPointError) as exc:
            raise SamplerError(f"{type(exc).__name__}: {exc}", t) from exc
        window.tries += stats.tries
        window.accepts += stats.accepts
        if t < config.burn_in:
            if config.adapt and (t + 1) % config.adapt_every == 0:
                rate = window.rates()
                scales = np.where(rate < 0.25, scales * 0.7, np.where(rate > 0.40, scales * 1.4, scales))
                window = _AcceptStats.zeros(model.vine.n_edges)
        else:
            total.tries += stats.tries
            total.accepts += stats.accepts
            if (t - config.burn_in) % config.thin == 0:
                rec = _record(t, state, L, data)
                if model.use_likelihood and not np.isfinite(rec.loglik):
                    raise SamplerError("non-finite log-likelihood in kept state", t)
                records.append(rec)
        if callback is not None:
            callback(t, state)
    meta = {
        "proposal_scales": scales.tolist(),
        "acceptance_rates": [None if np.isnan(r) else float(r) for r in total.rates()],
        "n_iter": config.n_iter,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
    }
    return PosteriorTrace(records, config.total_mass, meta)


def predictive_sample(trace: PosteriorTrace, model: DPMixture, n_draws: int, rng=None):
    """Draws ``(u, x)`` from the posterior predictive distribution.

    Each draw picks a kept iteration uniformly, then an existing cluster with
    probability ``N_m / (M + N)`` or a fresh centering-measure component with
    probability ``M / (M + N)``, then ``x`` from the component's covariate
    model and ``u`` from its conditional vine at ``x``.

    Returns
    -------
    u : ndarray of shape (n_draws, d)
    x : ndarray of shape (n_draws, p)
    """
    rng = np.random.default_rng(rng)
    if len(trace) == 0:
        raise ValueError("trace has no kept iterations")
    n_obs, mass = trace.n_obs, trace.total_mass
    fresh_b, fresh_p = model.g0.sample(rng, n_draws)
    betas, phis = fresh_b, fresh_p
    pick = rng.integers(len(trace), size=n_draws)
    new = rng.random(n_draws) < mass / (mass + n_obs)
    for j in np.flatnonzero(~new):
        rec = trace.records[pick[j]]
        m = _sample_log_weights(np.log(rec.weights), rng)
        betas[j] = rec.beta[m]
        phis[j] = rec.phi[m]
    X = model.g0.simulate_covariates(phis, rng)
    params, _ = model.vine.params_rows(betas, X)
    U = vn.simulate(model.vine.vine_spec, params, n_draws, rng)
    return U, X
