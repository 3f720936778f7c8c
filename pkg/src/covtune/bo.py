"""Acquisition functions and the ask/tell optimisation loop.

Sessions maximise internally; callers minimising an objective negate it at
the session boundary.  The search space is a finite candidate grid; each
iteration re-selects GP hyperparameters on the current history by maximum
marginal likelihood before scoring candidates, and records one trace row per
observation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .data import LabeledDataset
from .gp import gp_posterior_many, select_hypers_ml
from .kernels import DEFAULT_JITTER, KernelSpec, ReweightSet, normalize, pair_diag, pair_matrix, reweight
from .svm import SvmConfig, loo_mse_select, train_svr

__all__ = [
    "AcquisitionSpec",
    "BoSession",
    "PretrainReport",
    "ZeroKernelError",
    "acquisition_value",
    "beta_schedule",
    "suggest",
    "tell",
    "run_bo",
    "pretrain_kernel",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class ZeroKernelError(ValueError):
    """Pre-training produced no usable anchors (zero kernel)."""


@dataclass(frozen=True)
class AcquisitionSpec:
    """Acquisition choice plus the confidence parameter for the UCB schedule."""

    kind: str = "ucb"
    delta: float = 0.1

    def __post_init__(self):
        if self.kind not in ("pi", "ei", "ucb"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")


def acquisition_value(kind: str, mu, sigma, y_best, beta=0.0):
    """Score candidates from posterior mean/deviation and the incumbent.

    Accepts scalars or arrays; sigma must be non-negative.  At sigma = 0 the
    improvement scores take their degenerate limits and UCB returns mu.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    scalar = mu.ndim == 0 and sigma.ndim == 0
    mu, sigma = np.atleast_1d(mu), np.atleast_1d(sigma)
    if kind == "ucb":
        out = mu + math.sqrt(beta) * sigma
    else:
        diff = mu - y_best
        pos = sigma > 0
        z = np.where(pos, diff / np.where(pos, sigma, 1.0), 0.0)
        if kind == "pi":
            out = np.where(pos, ndtr(z), (diff > 0).astype(float))
        elif kind == "ei":
            pdf = np.exp(-0.5 * z * z) / SQRT_2PI
            out = np.where(pos, diff * ndtr(z) + sigma * pdf, np.maximum(diff, 0.0))
        else:
            raise ValueError(f"unknown acquisition {kind!r}")
    return float(out[0]) if scalar else out


def beta_schedule(t: int, n_candidates: int, delta: float) -> float:
    """Confidence multiplier for UCB at iteration t (non-decreasing in t)."""
    if t < 1:
        raise ValueError("iterations start at 1")
    return 2.0 * math.log(n_candidates * t * t * math.pi ** 2 / (6.0 * delta))


class _CandidateKernelCache:
    """Kernel columns against a fixed candidate grid, filled lazily.

    Column i holds the 2-kernel values between candidate i and every
    candidate; the cache is read-mostly and keyed per spec by the session.
    Composite specs derive their columns from a shared cache of the inner
    kernel, so re-selecting the outer scale each iteration is cheap.
    """

    def __init__(self, spec, candidates, inner_cache=None):
        self.spec = spec
        self.candidates = candidates
        self._inner = inner_cache
        self._cols = {}
        self._diag = None

    def diag(self):
        if self._diag is None:
            self._diag = pair_diag(self.spec, self.candidates)
        return self._diag

    def column(self, i):
        col = self._cols.get(i)
        if col is None:
            if self._inner is not None:
                d = self._inner.diag()
                inner_col = self._inner.column(i)
                col = np.exp(-(d[i] + d - 2.0 * inner_col) / (2.0 * self.spec.scale))
            else:
                col = pair_matrix(self.spec, self.candidates[i:i + 1],
                                  self.candidates)[0]
            self._cols[i] = col
        return col

    def cross(self, history_x, history_idx):
        """(N, M) kernel matrix between history points and all candidates."""
        rows = []
        for x, idx in zip(history_x, history_idx):
            if idx is None:  # off-grid observation
                rows.append(pair_matrix(self.spec, np.asarray(x)[None, :],
                                        self.candidates)[0])
            else:
                rows.append(self.column(idx))
        return np.array(rows)

    def gram_submatrix(self, cross, history_x, history_idx):
        """Gram over the history, reusing cached columns where on-grid."""
        n = len(history_x)
        G = np.empty((n, n))
        off = [k for k, idx in enumerate(history_idx) if idx is None]
        for k, idx in enumerate(history_idx):
            if idx is None:
                continue
            for l, jdx in enumerate(history_idx):
                if jdx is not None:
                    G[k, l] = cross[k][jdx]
        if off:
            Xo = np.array([history_x[k] for k in off])
            Xa = np.array(history_x)
            block = pair_matrix(self.spec, Xo, Xa)
            for r, k in enumerate(off):
                G[k, :] = block[r]
                G[:, k] = block[r]
        return np.triu(G) + np.triu(G, 1).T


@dataclass
class BoSession:
    """Single-writer ask/tell state over a finite candidate grid.

    `sigma_grid=None` means the kernel scale is fixed (pre-trained); with a
    grid, the scale is re-selected each iteration alongside the noise.
    """

    candidates: np.ndarray
    spec: KernelSpec
    acquisition: AcquisitionSpec = AcquisitionSpec()
    nu2_grid: tuple = (1e-6,)
    sigma_grid: tuple | None = None
    seed: int = 0
    X: list = field(default_factory=list)
    y: list = field(default_factory=list)
    idx: list = field(default_factory=list)
    n_initial: int = 0
    trace: list = field(default_factory=list)
    pending: dict | None = None

    def __post_init__(self):
        C = np.asarray(self.candidates, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.shape[0] == 0:
            raise ValueError("candidate grid is empty")
        self.candidates = C
        self.nu2_grid = tuple(float(v) for v in self.nu2_grid)
        self.sigma_grid = None if self.sigma_grid is None else tuple(
            float(v) for v in self.sigma_grid)
        self._lookup = {C[i].tobytes(): i for i in range(C.shape[0])}
        self._caches = {}

    # -- helpers --------------------------------------------------------

    def add_initial(self, X0, y0):
        """Seed the session with pre-existing observations (not traced)."""
        for x, yv in zip(X0, y0):
            self._append(np.asarray(x, dtype=float).ravel(), float(yv))
        self.n_initial = len(self.X)

    def _append(self, x, yv):
        if not math.isfinite(yv):
            raise ValueError(f"observation must be finite, got {yv!r}")
        key = x.tobytes()
        idx = self._lookup.get(key)
        if idx is None:
            warnings.warn("observation at a point outside the candidate grid",
                          RuntimeWarning, stacklevel=3)
        self.X.append(x)
        self.y.append(yv)
        self.idx.append(idx)
        return idx

    def _cache_for(self, spec):
        cache = self._caches.get(spec)
        if cache is None:
            inner = None
            if spec.kind == "composite" and not spec.normalized:
                inner = self._cache_for(spec.inner)
            cache = _CandidateKernelCache(spec, self.candidates, inner_cache=inner)
            self._caches[spec] = cache
        return cache

    def dataset(self):
        return LabeledDataset(X=np.array(self.X), y=np.array(self.y))

    @property
    def best(self):
        return max(self.y) if self.y else -math.inf


def suggest(session: BoSession) -> np.ndarray:
    """Choose the next candidate (argmax of the acquisition; ties -> lowest
    index).  Repeated calls before `tell` return the same point."""
    if session.pending is not None:
        return session.candidates[session.pending["index"]].copy()
    t = len(session.trace) + 1
    M = session.candidates.shape[0]
    if not session.X:
        # no history: explore the prior, scored by mu + sigma = sqrt(K(x,x))
        sigma0 = session.sigma_grid[0] if session.sigma_grid else None
        spec = session.spec if sigma0 is None else session.spec.with_scale(sigma0)
        scores = np.sqrt(np.maximum(pair_diag(spec, session.candidates), 0.0))
        i = int(np.argmax(scores))
        session.pending = {
            "t": t, "index": i, "acq": float(scores[i]),
            "mu": 0.0, "sigma": float(scores[i]),
            "nu2": session.nu2_grid[0], "sigma_scale": sigma0,
            "jitter_escalations": 0,
        }
        return session.candidates[i].copy()
    data = session.dataset()
    details = {}
    nu2, sigma = select_hypers_ml(
        session.spec, data, session.nu2_grid, session.sigma_grid,
        gram_fn=lambda spec, X: session._cache_for(spec).gram_submatrix(
            session._cache_for(spec).cross(session.X, session.idx),
            session.X, session.idx),
        details=details,
    )
    model = details["model"]
    cache = session._cache_for(model.spec)
    cross = cache.cross(session.X, session.idx)
    mu, var = gp_posterior_many(model, session.candidates, cross=cross,
                                prior_diag=cache.diag())
    sd = np.sqrt(var)
    y_best = session.best
    beta = beta_schedule(t, M, session.acquisition.delta)
    scores = acquisition_value(session.acquisition.kind, mu, sd, y_best, beta)
    i = int(np.argmax(scores))
    session.pending = {
        "t": t, "index": i, "acq": float(scores[i]),
        "mu": float(mu[i]), "sigma": float(sd[i]),
        "nu2": nu2, "sigma_scale": sigma,
        "jitter_escalations": model.jitter_escalations,
    }
    return session.candidates[i].copy()


def tell(session: BoSession, x, y: float) -> BoSession:
    """Record an observation; appends one trace row and clears the pending
    suggestion.  Off-grid points warn (never error) and are conditioned on
    as given."""
    x = np.asarray(x, dtype=float).ravel()
    yv = float(y)
    pending = session.pending
    ctx = None
    if pending is not None and pending["index"] is not None:
        suggested = session.candidates[pending["index"]]
        if x.shape == suggested.shape and np.array_equal(x, suggested):
            ctx = pending
    idx = session._append(x, yv)
    row = {
        "t": len(session.trace) + 1,
        "x": [float(v) for v in x],
        "y": yv,
        "best": session.best,
        "nu2": None if ctx is None else ctx["nu2"],
        "sigma": None if ctx is None else ctx["sigma_scale"],
        "acq": None if ctx is None else ctx["acq"],
        "jitter_escalations": 0 if ctx is None else ctx["jitter_escalations"],
    }
    if idx is None:
        row["warning"] = "off-grid observation"
    session.trace.append(row)
    session.pending = None
    return session


def run_bo(session: BoSession, objective, iterations: int,
           noise_std: float = 0.0) -> list:
    """Run suggest/evaluate/tell rounds; observations get seeded Gaussian
    noise of standard deviation `noise_std`.  Returns the trace rows."""
    rng = np.random.default_rng(session.seed)
    for _ in range(int(iterations)):
        x = suggest(session)
        yv = float(objective(x))
        if noise_std > 0:
            yv += rng.normal(0.0, noise_std)
        tell(session, x, yv)
    return list(session.trace)


@dataclass(frozen=True)
class PretrainReport:
    """Provenance of a pre-trained kernel."""

    C: float
    sigma: float | None
    loo_mse: float
    n_support: int
    n_anchors: int
    epsilon: float
    normalized: bool


def pretrain_kernel(aux: LabeledDataset, base_spec: KernelSpec, c_grid,
                    sigma_grid, epsilon: float = 0.01,
                    normalize_result: bool = True):
    """Tune the base kernel to an auxiliary dataset.

    Selects (C, sigma) by leave-one-out MSE, trains a q=1 tube regression on
    the full auxiliary data, and re-weights the base family with the
    resulting dual coefficients; optionally normalises the result.  Returns
    (spec, report).
    """
    if len(aux) < 3:
        raise ValueError("pre-training needs at least 3 auxiliary points")
    details = {}
    C, sigma = loo_mse_select(aux, base_spec, c_grid, sigma_grid,
                              epsilon=epsilon, details=details)
    spec = base_spec if sigma is None else base_spec.with_scale(sigma)
    model = train_svr(aux, spec, SvmConfig(q=1, C=C, epsilon=epsilon))
    points, alphas = model.anchors()
    if len(alphas) == 0:
        raise ZeroKernelError(
            "all dual coefficients are zero (constant targets or too-wide "
            "tube); the re-weighted kernel would vanish")
    anchors = ReweightSet(points=points, alphas=alphas)
    tuned = reweight(spec, anchors)
    if normalize_result:
        tuned = normalize(tuned)
    report = PretrainReport(
        C=float(C), sigma=None if sigma is None else float(sigma),
        loo_mse=float(details["mse"][(C, sigma)]),
        n_support=int(len(alphas)), n_anchors=int(len(aux)),
        epsilon=float(epsilon), normalized=bool(normalize_result),
    )
    return tuned, report
