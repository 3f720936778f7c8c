"""Support vector machines whose dual couples 2q-tuples of training points.

For q = 1 this is the ordinary kernel SVM (regression with an epsilon tube,
or binary classification) solved by SMO.  For q >= 2 the dual objective is a
degree-2q polynomial in the coefficients; it is minimised by projected
gradient descent over a cached evaluation tensor of the 2q-kernel, with the
projection alternating a box clamp and a mean shift onto the zero-sum
hyperplane.  Training sizes are guarded so the tensor work stays desk-scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import smo_svr, smo_svc
from .data import LabeledDataset
from .kernels import FREE_KINDS, KernelSpec, _flatten, gram, pair_matrix

__all__ = [
    "SvmConfig",
    "SvmModel",
    "SolverDiagnostics",
    "train_svr",
    "train_svc",
    "svm_predict",
    "loo_mse_select",
    "gram_tensor",
    "project_box_sumzero",
]

GUARD_LIMIT = 1e7
SOLVER_TOL = 1e-6
SOLVER_MAX_ITER = 100_000


@dataclass(frozen=True)
class SvmConfig:
    """Solver configuration: 2q-kernel order, budget C, tube width, task."""

    q: int = 1
    C: float = 1.0
    epsilon: float = 0.0
    task: str = "regression"

    def __post_init__(self):
        if int(self.q) < 1:
            raise ValueError("q must be >= 1")
        object.__setattr__(self, "q", int(self.q))
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")


@dataclass(frozen=True, eq=False)
class SolverDiagnostics:
    iterations: int
    converged: bool
    objective: tuple  # objective value per iteration, starting point included


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained model: training points, dual coefficients, bias, kernel."""

    X: np.ndarray
    alpha: np.ndarray
    b: float
    spec: KernelSpec
    config: SvmConfig
    diagnostics: SolverDiagnostics

    @property
    def support_indices(self):
        return np.where(self.alpha != 0.0)[0]

    def anchors(self):
        """(x_i, alpha_i) pairs with non-zero coefficients."""
        idx = self.support_indices
        return self.X[idx], self.alpha[idx]


def _check_guard(n, q):
    if q >= 2 and float(n) ** (2 * q - 1) > GUARD_LIMIT:
        raise ValueError(
            f"N={n} with q={q} needs N^(2q-1)={float(n) ** (2 * q - 1):.3g} "
            f"gradient terms, above the {GUARD_LIMIT:.0g} guard"
        )


def gram_tensor(spec: KernelSpec, X, order: int) -> np.ndarray:
    """Dense evaluation tensor T[i1..i_order] = K(x_{i1}, ..., x_{i_order})."""
    X = np.asarray(X, dtype=float)
    if order == 2:
        return pair_matrix(spec, X, X)
    if spec.kind not in FREE_KINDS:
        raise ValueError(f"{spec.kind} kernel is only defined for 2 points")
    letters = "abcdefghij"[:order]
    sub = ",".join(f"{c}z" for c in letters) + "->" + letters
    flat = _flatten(spec)
    if flat is None:
        u = np.einsum(sub, *([X] * order))
        return _apply_scalar(spec, u, X, order)
    V, w, c = flat
    out = np.zeros((X.shape[0],) * order)
    sub_s = "z," + sub
    for vs, ws, cs in zip(V, w, c):
        u = np.einsum(sub_s, vs, *([X] * order))
        out += ws * _apply_scalar(spec, u, X, order, correction=cs)
    return out


def _apply_scalar(spec, u, X, order, correction=0.0):
    if spec.kind == "linear":
        return u
    if spec.kind == "polynomial":
        return (1.0 + u) ** spec.degree
    if spec.kind == "exponential":
        return np.exp(u / spec.scale)
    # se: subtract half squared norms of every argument from the exponent
    h = 0.5 * (X * X).sum(axis=1)
    e = u - correction
    for axis in range(order):
        shape = [1] * order
        shape[axis] = -1
        e = e - h.reshape(shape)
    return np.exp(e / spec.scale)


def _contract_gradient(T, alpha, order):
    """grad_i = sum_{i2..i_order} T[i, i2, ...] * alpha_{i2} * ... (symmetry)."""
    letters = "abcdefghij"[:order]
    sub = letters + "," + ",".join(letters[1:]) + "->" + letters[0]
    return np.einsum(sub, T, *([alpha] * (order - 1)))


def prox_box_sumzero_l1(v, tau, lo, hi, iters=100):
    """Proximal map of tau*|u|_1 + indicator{lo <= u <= hi, sum(u) = 0}.

    Coordinatewise this is a soft-threshold and box clamp of a uniformly
    shifted copy of v; the shift making the sum vanish is found by bisection
    (each coordinate map, hence the sum, is non-increasing in the shift).
    With tau = 0 this is the Euclidean projection onto the feasible set.
    Any float-level residual is repaired greedily against the box.
    """
    v = np.asarray(v, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def mapped(lam):
        z = v - lam
        if tau:
            z = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
        return np.clip(z, lo, hi)

    lam_lo = float((v - hi).min()) - tau  # everything clamps to hi: sum >= 0
    lam_hi = float((v - lo).max()) + tau  # everything clamps to lo: sum <= 0
    for _ in range(iters):
        lam = 0.5 * (lam_lo + lam_hi)
        if mapped(lam).sum() > 0.0:
            lam_lo = lam
        else:
            lam_hi = lam
    out = mapped(0.5 * (lam_lo + lam_hi))
    r = out.sum()
    if r != 0.0:
        for k in range(out.shape[0]):
            room = (out[k] - lo[k]) if r > 0 else (hi[k] - out[k])
            d = min(room, abs(r))
            out[k] -= math.copysign(d, r)
            r = out.sum()
            if r == 0.0:
                break
    return out


def project_box_sumzero(v, lo, hi):
    """Euclidean projection onto {lo <= v <= hi, sum(v) = 0}."""
    return prox_box_sumzero_l1(v, 0.0, lo, hi)


def _pgd_minimize(T, y, lo, hi, eps, order, tol=SOLVER_TOL, max_iter=SOLVER_MAX_ITER):
    """Proximal projected gradient descent with backtracking on the 2q dual.

    The polynomial part of the dual is handled by its gradient; the tube
    term and the constraints go through `prox_box_sumzero_l1`.  The stopping
    rule is the infinity norm of the unit-step prox-gradient mapping, i.e.
    the constraint-projected gradient.
    """
    n = y.shape[0]
    alpha = np.zeros(n)

    letters = "abcdefghij"[:order]
    full_sub = letters + "," + ",".join(letters) + "->"

    def smooth(a):
        return float(np.einsum(full_sub, T, *([a] * order))) / order - float(y @ a)

    def objective(a):
        return smooth(a) + eps * float(np.abs(a).sum())

    def smooth_gradient(a):
        return _contract_gradient(T, a, order) - y

    def pg_residual(a, gs):
        return float(np.abs(a - prox_box_sumzero_l1(a - gs, eps, lo, hi)).max())

    f = objective(alpha)
    fs = smooth(alpha)
    history = [f]
    step = 1.0
    converged = False
    it = 0
    while it < max_iter:
        gs = smooth_gradient(alpha)
        if pg_residual(alpha, gs) < tol:
            converged = True
            break
        moved = False
        while step > 1e-18:
            cand = prox_box_sumzero_l1(alpha - step * gs, step * eps, lo, hi)
            d = cand - alpha
            fs_cand = smooth(cand)
            # classic prox-gradient backtracking on the smooth upper bound
            if fs_cand <= fs + float(gs @ d) + float(d @ d) / (2.0 * step):
                fc = fs_cand + eps * float(np.abs(cand).sum())
                if fc < f:
                    alpha, f, fs = cand, fc, fs_cand
                    history.append(f)
                    step *= 1.3
                    moved = True
                    break
            step *= 0.5
        if not moved:
            # descent exhausted at float resolution; accept if stationary
            converged = pg_residual(alpha, smooth_gradient(alpha)) < 1e-4
            break
        it += 1
    return alpha, f, it, converged, history


def _svr_bias(f, y, alpha, box, eps):
    """KKT bias for the tube loss: average over interior support vectors,
    otherwise the midpoint of the feasible interval."""
    g = f - y
    thr = 1e-8 * (1.0 + box)
    interior, lows, ups = [], [], []
    for gi, ai in zip(g, alpha):
        if ai > thr and ai < box - thr:
            interior.append(-gi - eps)
        elif ai < -thr and ai > -box + thr:
            interior.append(-gi + eps)
        elif ai >= box - thr:
            ups.append(-gi - eps)
        elif ai <= -box + thr:
            lows.append(-gi + eps)
        else:  # alpha ~ 0
            ups.append(-gi + eps)
            lows.append(-gi - eps)
    if interior:
        return float(np.mean(interior))
    lo = max(lows) if lows else -math.inf
    hi = min(ups) if ups else math.inf
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return float(hi)
    if math.isinf(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def _svc_bias(f, y, alpha, box):
    thr = 1e-8 * (1.0 + box)
    interior, lows, ups = [], [], []
    for fi, yi, ai in zip(f, y, alpha):
        abar = yi * ai
        val = yi - fi
        if thr < abar < box - thr:
            interior.append(val)
        elif (abar <= thr and yi > 0) or (abar >= box - thr and yi < 0):
            lows.append(val)
        else:
            ups.append(val)
    if interior:
        return float(np.mean(interior))
    lo = max(lows) if lows else -math.inf
    hi = min(ups) if ups else math.inf
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return float(hi)
    if math.isinf(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def train_svr(data: LabeledDataset, spec: KernelSpec, config: SvmConfig) -> SvmModel:
    """Fit the tube-regression dual; see the module docstring for solvers."""
    if len(data) < 2:
        raise ValueError("regression training needs at least 2 points")
    n = len(data)
    q = config.q
    _check_guard(n, q)
    box = config.C / n
    X, y = data.X, data.y
    if q == 1:
        K = gram(spec, X, 0.0)
        alpha, iters, converged, hist = smo_svr(
            K, y, box, config.epsilon, tol=SOLVER_TOL,
            max_iter=SOLVER_MAX_ITER, record=True,
        )
        f = K @ alpha
    else:
        T = gram_tensor(spec, X, 2 * q)
        lo = np.full(n, -box)
        hi = np.full(n, box)
        alpha, _, iters, converged, hist = _pgd_minimize(
            T, y, lo, hi, config.epsilon, 2 * q
        )
        f = _contract_gradient(T, alpha, 2 * q)
    if not converged:
        warnings.warn(
            f"SVR solver stopped after {iters} iterations without reaching "
            f"tolerance; returning the best iterate", RuntimeWarning,
        )
    b = _svr_bias(f, y, alpha, box, config.epsilon)
    return SvmModel(
        X=X.copy(), alpha=alpha, b=b, spec=spec, config=config,
        diagnostics=SolverDiagnostics(iters, converged, tuple(hist)),
    )


def train_svc(data: LabeledDataset, spec: KernelSpec, config: SvmConfig) -> SvmModel:
    """Fit the binary classification dual (labels in {-1, +1})."""
    y = data.y
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("classification labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise ValueError("classification needs both classes present")
    n = len(data)
    q = config.q
    _check_guard(n, q)
    box = config.C / n
    X = data.X
    if q == 1:
        K = gram(spec, X, 0.0)
        alpha, iters, converged, hist = smo_svc(
            K, y, box, tol=SOLVER_TOL, max_iter=SOLVER_MAX_ITER, record=True
        )
        f = K @ alpha
    else:
        T = gram_tensor(spec, X, 2 * q)
        lo = np.where(y > 0, 0.0, -box)
        hi = np.where(y > 0, box, 0.0)
        alpha, _, iters, converged, hist = _pgd_minimize(T, y, lo, hi, 0.0, 2 * q)
        f = _contract_gradient(T, alpha, 2 * q)
    if not converged:
        warnings.warn(
            f"SVC solver stopped after {iters} iterations without reaching "
            f"tolerance; returning the best iterate", RuntimeWarning,
        )
    b = _svc_bias(f, y, alpha, box)
    cfg = SvmConfig(config.q, config.C, 0.0, "classification")
    return SvmModel(
        X=X.copy(), alpha=alpha, b=b, spec=spec, config=cfg,
        diagnostics=SolverDiagnostics(iters, converged, tuple(hist)),
    )


def svm_predict(model: SvmModel, x) -> float:
    """Evaluate the trained function at one point."""
    x = np.asarray(x, dtype=float).ravel()
    q = model.config.q
    if q == 1:
        k = pair_matrix(model.spec, x[None, :], model.X)[0]
        return float(k @ model.alpha + model.b)
    order = 2 * q
    T = _cross_tensor(model.spec, x, model.X, order)
    val = T
    for _ in range(order - 1):
        val = val @ model.alpha
    return float(val + model.b)


def _cross_tensor(spec, x, X, order):
    """T[i2..i_order] = K(x, x_{i2}, ..., x_{i_order}) for a fixed first point."""
    if spec.kind not in FREE_KINDS:
        raise ValueError(f"{spec.kind} kernel is only defined for 2 points")
    rest = order - 1
    letters = "abcdefghij"[:rest]
    sub = "z," + ",".join(f"{c}z" for c in letters) + "->" + letters
    flat = _flatten(spec)
    Xq = np.asarray(X, dtype=float)

    def finish(u, correction=0.0):
        if spec.kind == "linear":
            return u
        if spec.kind == "polynomial":
            return (1.0 + u) ** spec.degree
        if spec.kind == "exponential":
            return np.exp(u / spec.scale)
        h = 0.5 * (Xq * Xq).sum(axis=1)
        e = u - correction - 0.5 * float(x @ x)
        for axis in range(rest):
            shape = [1] * rest
            shape[axis] = -1
            e = e - h.reshape(shape)
        return np.exp(e / spec.scale)

    if flat is None:
        u = np.einsum(sub, x, *([Xq] * rest))
        return finish(u)
    V, w, c = flat
    out = np.zeros((Xq.shape[0],) * rest)
    for vs, ws, cs in zip(V, w, c):
        u = np.einsum(sub, vs * x, *([Xq] * rest))
        out += ws * finish(u, correction=cs)
    return out


def loo_mse_select(
    data: LabeledDataset,
    spec_template: KernelSpec,
    C_grid,
    sigma_grid,
    epsilon: float = 0.0,
    details: dict | None = None,
):
    """Pick (C, sigma) minimising leave-one-out mean squared error.

    Every fold is an exact retrain (q = 1), warm-started from the previous
    fold's solution.  Ties break towards smaller sigma, then smaller C.
    `details`, when given, is filled with the per-grid-point MSEs and the
    number of trainings executed.
    """
    n = len(data)
    if n < 3:
        raise ValueError("leave-one-out selection needs at least 3 points")
    C_grid = [float(c) for c in C_grid]
    if not C_grid:
        raise ValueError("empty C grid")
    has_scale = spec_template.kind in ("exponential", "se", "matern12", "matern32", "composite")
    if has_scale:
        sigma_grid = [float(s) for s in sigma_grid]
        if not sigma_grid:
            raise ValueError("empty sigma grid")
    else:
        sigma_grid = [None]
    X, y = data.X, data.y
    if np.allclose(X, X[0]):
        raise ValueError("degenerate data: all inputs identical")
    n_train = 0
    results = {}
    for sigma in sigma_grid:
        spec = spec_template.with_scale(sigma) if sigma is not None else spec_template
        K = gram(spec, X, 0.0)
        for C in C_grid:
            box = C / (n - 1)
            errs = np.empty(n)
            warm_full = None  # length-n coefficient vector aligned to points
            lo = np.full(n - 1, -box)
            hi = np.full(n - 1, box)
            for i in range(n):
                keep = np.arange(n) != i
                Ki = K[np.ix_(keep, keep)]
                yi = y[keep]
                if warm_full is not None:
                    a0 = project_box_sumzero(warm_full[keep], lo, hi)
                else:
                    a0 = None
                alpha, _, _, _ = smo_svr(
                    Ki, yi, box, epsilon, tol=SOLVER_TOL,
                    max_iter=SOLVER_MAX_ITER, alpha0=a0,
                )
                n_train += 1
                b = _svr_bias(Ki @ alpha, yi, alpha, box, epsilon)
                pred = float(K[i, keep] @ alpha + b)
                errs[i] = pred - y[i]
                # warm-chain: align the fold solution back to full indexing
                warm_full = np.zeros(n)
                warm_full[keep] = alpha
            results[(C, sigma)] = float(np.mean(errs ** 2))
    key = min(
        results,
        key=lambda cs: (results[cs], cs[1] if cs[1] is not None else 0.0, cs[0]),
    )
    if details is not None:
        details["mse"] = results
        details["trainings"] = n_train
    C_sel, sigma_sel = key
    return C_sel, sigma_sel
