"""Scikit-learn style front end for the conditional vine mixture."""

from __future__ import annotations

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import vine as vn
from .calibration import CalibrationSpec, ConditionalVine
from .sampler import (
    COVARIATE_MODELS,
    CenteringMeasure,
    Dataset,
    DPConfig,
    DPMixture,
    GaussianCoefPrior,
    predictive_sample,
    run_chain,
)

__all__ = ["ConditionalVineDPM", "build_model"]


def build_model(dim, p, vine="D", families="gaussian", links=None, calibration="linear",
                covariate_models="normal", coef_prior_mean=0.0, coef_prior_sd=1.0, x=None,
                covariate_priors=None) -> DPMixture:
    """Assemble a :class:`DPMixture` from plain settings.

    Covariate priors are centred on the sample moments of ``x`` when given,
    unless ``covariate_priors`` (the ``to_dict`` output of saved priors)
    restores them exactly.
    """
    spec = vn.VineSpec(vine, dim, families)
    cal = CalibrationSpec(calibration, p)
    cvine = ConditionalVine(spec, cal, links)
    coef = GaussianCoefPrior.isotropic(spec.n_edges, cal.n_coef, coef_prior_mean, coef_prior_sd)
    if isinstance(covariate_models, str):
        covariate_models = [covariate_models] * p
    if len(covariate_models) != p:
        raise ValueError(f"got {len(covariate_models)} covariate models for {p} covariates")
    if covariate_priors is not None:
        covs = [COVARIATE_MODELS[d["kind"]](**{k: v for k, v in d.items() if k != "kind"})
                for d in covariate_priors]
        if len(covs) != p:
            raise ValueError(f"got {len(covs)} covariate priors for {p} covariates")
        return DPMixture(cvine, CenteringMeasure(coef, covs))
    covs = []
    for h, kind in enumerate(covariate_models):
        if kind not in COVARIATE_MODELS:
            raise ValueError(f"unknown covariate model {kind!r}; expected one of {sorted(COVARIATE_MODELS)}")
        cls = COVARIATE_MODELS[kind]
        covs.append(cls.from_data(x[:, h]) if x is not None and len(x) > 1 else cls())
    return DPMixture(cvine, CenteringMeasure(coef, covs))


class ConditionalVineDPM(BaseEstimator):
    """Dirichlet-process mixture of conditional vine copulas.

    Parameters
    ----------
    vine : {"D", "C"}, default="D"
    families : str or sequence of str, default="gaussian"
        Kernel pair-copula families, one per edge or one for all.
    links : sequence of str, optional
    calibration : {"linear", "linear_plus_exp"}, default="linear"
    covariate_models : str or sequence of str, default="normal"
        ``"normal"`` or ``"bernoulli"`` per covariate.
    coef_prior_mean, coef_prior_sd : float
        Isotropic Gaussian centering measure for the calibration coefficients.
    total_mass : float, default=1.0
    n_iter, burn_in, thin : int
    proposal_scale : float, default=0.2
    adapt : bool, default=True
    n_init_clusters : int, default=1
    random_state : int or None

    Attributes
    ----------
    model_ : DPMixture
    trace_ : PosteriorTrace
    labels_ : ndarray of shape (N,)
        Least-squares point estimate of the partition, 1-based.
    n_clusters_ : int
        Modal number of occupied clusters.
    """

    def __init__(self, vine="D", families="gaussian", links=None, calibration="linear",
                 covariate_models="normal", coef_prior_mean=0.0, coef_prior_sd=1.0, total_mass=1.0,
                 n_iter=1000, burn_in=200, thin=1, proposal_scale=0.2, adapt=True, n_init_clusters=1,
                 random_state=None):
        self.vine = vine
        self.families = families
        self.links = links
        self.calibration = calibration
        self.covariate_models = covariate_models
        self.coef_prior_mean = coef_prior_mean
        self.coef_prior_sd = coef_prior_sd
        self.total_mass = total_mass
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.proposal_scale = proposal_scale
        self.adapt = adapt
        self.n_init_clusters = n_init_clusters
        self.random_state = random_state

    def _config(self):
        return DPConfig(
            total_mass=self.total_mass, n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
            proposal_scale=self.proposal_scale, adapt=self.adapt, n_init_clusters=self.n_init_clusters,
            seed=self.random_state,
        )

    def fit(self, U, X=None):
        """Run the sampler on pseudo-observations ``U`` with covariates ``X``."""
        data = Dataset(U, X)
        self.model_ = build_model(
            data.u.shape[1], data.x.shape[1], self.vine, self.families, self.links, self.calibration,
            self.covariate_models, self.coef_prior_mean, self.coef_prior_sd, data.x,
        )
        self.trace_ = run_chain(data, self.model_, self._config())
        self._dahl = self.trace_.point_estimate_index()
        self.labels_ = self.trace_.records[self._dahl].psi.copy()
        self.n_clusters_ = self.trace_.modal_n()
        self.n_features_in_ = data.u.shape[1]
        return self

    def _log_joint(self, rec, data):
        """``log w_m + log f(x | phi_m) + log c(u | x, beta_m)`` for each row and cluster."""
        cols = [np.log(rec.weights[m]) + self.model_.log_kernel(rec.beta[m], rec.phi[m], data)
                for m in range(rec.n)]
        return np.column_stack(cols)

    def predict(self, U, X=None):
        """Cluster of the point-estimate partition with the highest posterior weight."""
        check_is_fitted(self)
        lj = self._log_joint(self.trace_.records[self._dahl], Dataset(U, X))
        return np.argmax(lj, axis=1) + 1

    def score_samples(self, U, X=None):
        """Posterior-mean conditional copula log-density ``log c(u | x)``.

        Within one kept iteration the occupied clusters are mixed with weights
        proportional to ``w_m f(x | phi_m)``.
        """
        check_is_fitted(self)
        data = Dataset(U, X)
        per_iter = []
        for rec in self.trace_.records:
            lj = self._log_joint(rec, data)
            lx = np.column_stack([np.log(rec.weights[m]) + self.model_.g0.covariate_logpdf(rec.phi[m], data.x)
                                  for m in range(rec.n)])
            per_iter.append(special.logsumexp(lj, axis=1) - special.logsumexp(lx, axis=1))
        return special.logsumexp(np.array(per_iter), axis=0) - np.log(len(per_iter))

    def sample(self, n_samples=1, random_state=None):
        """Posterior predictive draws ``(U, X)``."""
        check_is_fitted(self)
        return predictive_sample(self.trace_, self.model_, n_samples, random_state)
