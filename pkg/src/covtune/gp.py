"""Zero-mean Gaussian process regression with grid hyperparameter selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import LabeledDataset
from .kernels import DEFAULT_JITTER, KernelSpec, gram, pair_diag, pair_matrix

__all__ = [
    "GpModel",
    "IllConditionedError",
    "gp_fit",
    "gp_posterior",
    "gp_posterior_many",
    "gp_nlml",
    "select_hypers_ml",
]

log = logging.getLogger(__name__)

MAX_JITTER = 1e-4
LOG_2PI = math.log(2.0 * math.pi)


class IllConditionedError(np.linalg.LinAlgError):
    """Gram matrix failed to factorise even at the maximum jitter."""

    def __init__(self, message, condition_estimate):
        super().__init__(message)
        self.condition_estimate = condition_estimate


@dataclass(frozen=True, eq=False)
class GpModel:
    """Immutable conditioned GP; an empty model is the prior."""

    spec: KernelSpec
    nu2: float
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray  # lower Cholesky factor of K + (nu2 + jitter) I
    jitter: float
    jitter_escalations: int

    def __len__(self):
        return self.X.shape[0]

    @property
    def _weights(self):
        # L^{-1} y, computed lazily and cached on the instance
        w = self.__dict__.get("_w")
        if w is None:
            w = solve_triangular(self.L, self.y, lower=True)
            self.__dict__["_w"] = w
        return w


def gp_fit(spec: KernelSpec, data: LabeledDataset, nu2: float,
           gram_matrix=None) -> GpModel:
    """Condition a zero-mean GP on data, escalating jitter on failure.

    Jitter starts at 1e-8 and doubles until the Cholesky factorisation
    succeeds or the 1e-4 cap is passed; every escalation is counted.
    `gram_matrix` optionally supplies a precomputed jitter-free Gram.
    """
    if nu2 < 0:
        raise ValueError("noise variance must be non-negative")
    n = len(data)
    if n == 0:
        empty = np.zeros((0, 0))
        return GpModel(spec, float(nu2), np.zeros((0, data.dimension or 0)),
                       np.zeros(0), empty, 0.0, 0)
    K = gram(spec, data.X, 0.0) if gram_matrix is None else np.asarray(gram_matrix)
    jitter = DEFAULT_JITTER
    escalations = 0
    while jitter <= MAX_JITTER:
        try:
            L = np.linalg.cholesky(K + (nu2 + jitter) * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 2.0
            escalations += 1
            continue
        if escalations:
            log.info("gram factorisation needed %d jitter escalations (%.3g)",
                     escalations, jitter)
        return GpModel(spec, float(nu2), data.X, data.y, L, jitter, escalations)
    cond = float(np.linalg.cond(K + (nu2 + MAX_JITTER) * np.eye(n)))
    raise IllConditionedError(
        f"gram matrix failed to factorise at jitter {MAX_JITTER:g} "
        f"(condition estimate {cond:.3g})", cond)


def gp_posterior(model: GpModel, x):
    """Posterior mean and variance at one point."""
    x = np.asarray(x, dtype=float).ravel()
    mu, var = gp_posterior_many(model, x[None, :])
    return float(mu[0]), float(var[0])


def gp_posterior_many(model: GpModel, Xq, cross=None, prior_diag=None):
    """Posterior mean and variance over rows of Xq.

    `cross` optionally supplies the (N, M) matrix of kernel values between
    training and query points, and `prior_diag` the query diagonal; both are
    computed from the model spec when omitted.
    """
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq[:, None]
    kxx = pair_diag(model.spec, Xq) if prior_diag is None else np.asarray(prior_diag)
    if len(model) == 0:
        return np.zeros(Xq.shape[0]), kxx.copy()
    kq = pair_matrix(model.spec, model.X, Xq) if cross is None else np.asarray(cross)
    V = solve_triangular(model.L, kq, lower=True)
    mu = V.T @ model._weights
    var = kxx - (V * V).sum(axis=0)
    deficit = float(-var.min(initial=0.0))
    if deficit > 1e-8:
        log.warning("posterior variance clamped by %.3g", deficit)
    np.maximum(var, 0.0, out=var)
    return mu, var


def gp_nlml(model: GpModel) -> float:
    """Negative log marginal likelihood of the conditioned data."""
    n = len(model)
    if n < 1:
        raise ValueError("marginal likelihood needs at least one observation")
    w = model._weights
    return float(0.5 * (w @ w) + np.log(np.diag(model.L)).sum() + 0.5 * n * LOG_2PI)


def select_hypers_ml(spec_template: KernelSpec, data: LabeledDataset,
                     nu2_grid, sigma_grid=None, gram_fn=None,
                     details: dict | None = None):
    """Grid search minimising the negative log marginal likelihood.

    Returns (nu2, sigma) where sigma is None when `sigma_grid` is omitted
    (scale fixed by pre-training).  Ties break towards smaller nu2, then
    smaller sigma.  `details`, when given, receives the winning fitted model
    and the number of grid evaluations.
    """
    nu2_grid = [float(v) for v in nu2_grid]
    if not nu2_grid:
        raise ValueError("empty noise grid")
    sigmas = [None] if sigma_grid is None else [float(s) for s in sigma_grid]
    if not sigmas:
        raise ValueError("empty scale grid")
    if gram_fn is None:
        gram_fn = lambda spec, X: gram(spec, X, 0.0)
    best = None
    evaluations = 0
    failures = []
    for sigma in sigmas:
        spec = spec_template if sigma is None else spec_template.with_scale(sigma)
        K = gram_fn(spec, data.X)
        for nu2 in nu2_grid:
            evaluations += 1
            try:
                model = gp_fit(spec, data, nu2, gram_matrix=K)
            except IllConditionedError as exc:
                failures.append((nu2, sigma, str(exc)))
                continue
            key = (gp_nlml(model), nu2, sigma if sigma is not None else 0.0)
            if best is None or key < best[0]:
                best = (key, nu2, sigma, model)
    if best is None:
        raise IllConditionedError(
            f"no grid point factorised ({len(failures)} failures)", math.inf)
    if details is not None:
        details["model"] = best[3]
        details["nlml"] = best[0][0]
        details["evaluations"] = evaluations
    return best[1], best[2]
