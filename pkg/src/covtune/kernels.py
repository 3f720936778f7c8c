"""Kernel families evaluable at any arity, re-weighting, and Gram assembly.

The central objects are *families* of kernels indexed by the number of
arguments m.  The linear, polynomial, exponential and squared-exponential
families share a feature map that does not depend on m, which is what makes
re-weighting possible: given anchor points with coefficients
E = {(x_i, a_i)}, the re-weighted family is

    K_m^E(x, x', ...) = sum_{i,j} a_i a_j K_{m+2}(x_i, x_j, x, x', ...)

and is again a family of the same class.  Evaluation reduces to sums of the
base scalar function applied to <v_s, x * x' * ...> over flattened anchor
pairs v_s = x_i * x_j (elementwise products), which is how the vectorised
pair-matrix path below computes Gram and cross-covariance matrices.

Matern and mixture kernels exist only as ordinary 2-kernels (baseline
covariances); the composite kernel is a squared-exponential of the distance
induced by an inner 2-kernel in its feature space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelSpec",
    "ReweightSet",
    "ArityError",
    "DimensionMismatchError",
    "NonPositiveDiagonalError",
    "m_inner",
    "kernel_eval",
    "normalize",
    "reweight",
    "gram",
    "pair_matrix",
    "pair_diag",
]

FREE_KINDS = ("linear", "polynomial", "exponential", "se")
PAIR_ONLY_KINDS = ("matern12", "matern32", "mixture", "composite")

DEFAULT_JITTER = 1e-8

# Row budget for chunked anchor-pair contractions (entries per chunk).
_CHUNK_BUDGET = 4_000_000


class DimensionMismatchError(ValueError):
    """Input vectors do not share a common dimension."""


class ArityError(ValueError):
    """Kernel kind cannot be evaluated at the requested number of points."""


class NonPositiveDiagonalError(ValueError):
    """Normalisation hit a non-positive 2-kernel diagonal value."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = np.asarray(point, dtype=float)


@dataclass(frozen=True, eq=False)
class ReweightSet:
    """Anchor points and dual coefficients driving one re-weighting step.

    An empty set is legal and yields the zero kernel.  Compared by identity;
    the arrays are frozen after construction.
    """

    points: np.ndarray  # (k, n)
    alphas: np.ndarray  # (k,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        al = np.asarray(self.alphas, dtype=float).ravel()
        if pts.size == 0:
            pts = pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
        if pts.shape[0] != al.shape[0]:
            raise DimensionMismatchError(
                f"{pts.shape[0]} anchor points but {al.shape[0]} coefficients"
            )
        pts.setflags(write=False)
        al.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "alphas", al)

    @classmethod
    def from_pairs(cls, pairs):
        """Build from an iterable of (vector, coefficient) pairs."""
        pairs = list(pairs)
        if not pairs:
            return cls(points=np.zeros((0, 0)), alphas=np.zeros(0))
        return cls(
            points=np.array([np.asarray(x, dtype=float) for x, _ in pairs]),
            alphas=np.array([float(a) for _, a in pairs]),
        )

    def __len__(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def to_dict(self):
        return {
            "points": [list(map(float, row)) for row in self.points],
            "alphas": [float(a) for a in self.alphas],
        }

    @classmethod
    def from_dict(cls, d):
        pts = np.asarray(d["points"], dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 0)
        return cls(points=pts, alphas=np.asarray(d["alphas"], dtype=float))


@dataclass(frozen=True)
class KernelSpec:
    """Immutable, closed description of a kernel family.

    `reweights` lists anchor sets in application order (innermost first);
    `normalized` applies the unit-diagonal wrapper around everything else.
    Construct through the classmethods rather than directly.
    """

    kind: str
    degree: int | None = None
    scale: float | None = None
    weights: tuple[float, float, float] | None = None
    children: tuple["KernelSpec", ...] = ()
    normalized: bool = False
    reweights: tuple[ReweightSet, ...] = ()

    def __post_init__(self):
        if self.kind not in FREE_KINDS + PAIR_ONLY_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial":
            if self.degree is None or int(self.degree) < 1:
                raise ValueError("polynomial kernel needs degree >= 1")
            object.__setattr__(self, "degree", int(self.degree))
        if self.kind in ("exponential", "se", "matern12", "matern32", "composite"):
            if self.scale is None or not (float(self.scale) > 0):
                raise ValueError(f"{self.kind} kernel needs scale > 0")
            object.__setattr__(self, "scale", float(self.scale))
        if self.kind == "mixture":
            if self.weights is None or len(self.weights) != 3:
                raise ValueError("mixture kernel needs 3 weights")
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 for v in w) or not any(v > 0 for v in w):
                raise ValueError("mixture weights must be >= 0 and not all zero")
            object.__setattr__(self, "weights", w)
            if len(self.children) != 3:
                raise ValueError("mixture kernel needs 3 children")
        if self.kind == "composite" and len(self.children) != 1:
            raise ValueError("composite kernel needs exactly one inner kernel")
        if self.reweights and self.kind not in FREE_KINDS:
            raise ValueError(f"{self.kind} kernel cannot carry re-weighting sets")

    # -- constructors --------------------------------------------------

    @classmethod
    def linear(cls):
        return cls(kind="linear")

    @classmethod
    def polynomial(cls, degree):
        return cls(kind="polynomial", degree=degree)

    @classmethod
    def exponential(cls, scale):
        return cls(kind="exponential", scale=scale)

    @classmethod
    def se(cls, scale):
        return cls(kind="se", scale=scale)

    @classmethod
    def matern12(cls, scale):
        return cls(kind="matern12", scale=scale)

    @classmethod
    def matern32(cls, scale):
        return cls(kind="matern32", scale=scale)

    @classmethod
    def mixture(cls, weights, children):
        return cls(kind="mixture", weights=tuple(weights), children=tuple(children))

    @classmethod
    def composite(cls, scale, inner):
        return cls(kind="composite", scale=scale, children=(inner,))

    # -- derived specs -------------------------------------------------

    def with_scale(self, scale):
        """Copy of this spec with its outermost length-scale replaced."""
        if self.kind in ("exponential", "se", "matern12", "matern32", "composite"):
            return replace(self, scale=float(scale))
        raise ValueError(f"{self.kind} kernel has no scale hyperparameter")

    @property
    def inner(self):
        if self.kind != "composite":
            raise ValueError("only composite kernels have an inner kernel")
        return self.children[0]

    def to_dict(self):
        d = {"kind": self.kind}
        if self.degree is not None:
            d["degree"] = self.degree
        if self.scale is not None:
            d["scale"] = self.scale
        if self.weights is not None:
            d["weights"] = list(self.weights)
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        if self.normalized:
            d["normalized"] = True
        if self.reweights:
            d["reweights"] = [rw.to_dict() for rw in self.reweights]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            degree=d.get("degree"),
            scale=d.get("scale"),
            weights=tuple(d["weights"]) if "weights" in d else None,
            children=tuple(cls.from_dict(c) for c in d.get("children", ())),
            normalized=bool(d.get("normalized", False)),
            reweights=tuple(ReweightSet.from_dict(r) for r in d.get("reweights", ())),
        )


# ---------------------------------------------------------------------
# scalar evaluation
# ---------------------------------------------------------------------


def _as_points(points):
    pts = [np.asarray(p, dtype=float).ravel() for p in points]
    if not pts:
        raise ArityError("need at least one point")
    n = pts[0].shape[0]
    for i, p in enumerate(pts):
        if p.shape[0] != n:
            raise DimensionMismatchError(
                f"vector {i} has dimension {p.shape[0]}, expected {n}"
            )
    return pts


def m_inner(vectors: Sequence) -> float:
    """Sum of elementwise products of m vectors: <1, v1 * v2 * ... * vm>."""
    pts = _as_points(vectors)
    prod = pts[0].copy()
    for p in pts[1:]:
        prod *= p
    return float(prod.sum())


@lru_cache(maxsize=256)
def _flatten(spec: KernelSpec):
    """Flatten nested re-weighting into anchor-pair vectors and weights.

    Returns (V, w, c): V has one row per flattened anchor pair (the
    elementwise product of all anchors chosen), w the product of their
    coefficients, and c the accumulated squared-norm correction used by the
    se family (zero rows for the other kinds).  The plain family is the
    single pair (ones, 1, 0).  V has shape (S, n) with n = -1 meaning "any
    dimension" for the un-re-weighted case.
    """
    V = None  # lazily sized once we know n
    w = np.array([1.0])
    c = np.array([0.0])
    for rw in spec.reweights:
        pts, al = rw.points, rw.alphas
        k, n = pts.shape
        if k == 0:  # empty set annihilates the family: the zero kernel
            V = np.zeros((0, max(n, 1)))
            w = np.zeros(0)
            c = np.zeros(0)
            break
        if V is None:
            V = np.ones((1, n))
        elif V.shape[1] != n:
            raise DimensionMismatchError(
                f"re-weighting anchors have dimension {n}, expected {V.shape[1]}"
            )
        # pairwise anchor products and coefficient products
        P = (pts[:, None, :] * pts[None, :, :]).reshape(k * k, n)
        a2 = np.outer(al, al).ravel()
        V = (V[:, None, :] * P[None, :, :]).reshape(-1, n)
        w = (w[:, None] * a2[None, :]).ravel()
        if spec.kind == "se":
            nrm = 0.5 * (pts * pts).sum(axis=1)
            cc = (nrm[:, None] + nrm[None, :]).ravel()
            c = (c[:, None] + cc[None, :]).ravel()
        else:
            c = np.zeros(V.shape[0])
    if V is None:
        return None  # no re-weighting: caller uses the closed form
    for arr in (V, w, c):
        arr.setflags(write=False)
    return V, w, c


def _scalar_free_eval(spec, pts):
    """Evaluate a free-kind family (possibly re-weighted) at given points."""
    z = pts[0].copy()
    for p in pts[1:]:
        z *= p
    flat = _flatten(spec)
    if flat is None:
        u = np.array([z.sum()])
        w = np.array([1.0])
        c = np.array([0.0])
    else:
        V, w, c = flat
        if V.shape[0] == 0:  # empty re-weighting set: the zero kernel
            return 0.0
        if V.shape[1] != pts[0].shape[0]:
            raise DimensionMismatchError(
                f"points have dimension {pts[0].shape[0]}, "
                f"anchors have dimension {V.shape[1]}"
            )
        u = V @ z
    if spec.kind == "linear":
        return float(w @ u)
    if spec.kind == "polynomial":
        return float(w @ (1.0 + u) ** spec.degree)
    if spec.kind == "exponential":
        return float(w @ np.exp(u / spec.scale))
    # se: exponents carry anchor and query norm corrections
    h = 0.5 * sum(float(p @ p) for p in pts)
    return float(w @ np.exp((u - c - h) / spec.scale))


def _pair_only_eval(spec, pts):
    x, y = pts
    if spec.kind == "matern12":
        r = float(np.linalg.norm(x - y))
        return math.exp(-r / spec.scale)
    if spec.kind == "matern32":
        r = float(np.linalg.norm(x - y)) * math.sqrt(3.0) / spec.scale
        return (1.0 + r) * math.exp(-r)
    if spec.kind == "mixture":
        return sum(
            v * kernel_eval(child, pts)
            for v, child in zip(spec.weights, spec.children)
        )
    # composite: se distance in the inner kernel's feature space
    inner = spec.inner
    kxx = kernel_eval(inner, [x, x])
    kyy = kernel_eval(inner, [y, y])
    kxy = kernel_eval(inner, [x, y])
    return math.exp(-(kxx + kyy - 2.0 * kxy) / (2.0 * spec.scale))


def kernel_eval(spec: KernelSpec, points: Sequence) -> float:
    """Evaluate the kernel family described by `spec` at m points."""
    pts = _as_points(points)
    m = len(pts)
    if spec.kind in PAIR_ONLY_KINDS and m != 2:
        raise ArityError(f"{spec.kind} kernel is only defined for 2 points, got {m}")
    base = replace(spec, normalized=False)
    if spec.kind in FREE_KINDS:
        val = _scalar_free_eval(base, pts)
    else:
        val = _pair_only_eval(base, pts)
    if spec.normalized:
        for p in pts:
            d = kernel_eval(base, [p, p])
            if not d > 0.0:
                raise NonPositiveDiagonalError(
                    f"2-kernel diagonal {d!r} is not positive at {p.tolist()}", p
                )
            val /= math.sqrt(d)
    return val


def normalize(spec: KernelSpec) -> KernelSpec:
    """Wrap `spec` so every evaluation is rescaled to a unit 2-kernel diagonal."""
    return replace(spec, normalized=True)


def reweight(spec: KernelSpec, anchors: ReweightSet) -> KernelSpec:
    """Append one re-weighting step (anchor set) to a free-kind spec."""
    if spec.kind not in FREE_KINDS:
        raise ValueError(f"cannot re-weight a {spec.kind} kernel")
    if spec.normalized:
        raise ValueError(
            "cannot re-weight a diagonal-normalised spec; re-weight first and "
            "normalise the result (the se kind already subsumes the "
            "normalised exponential family)"
        )
    if spec.reweights and len(anchors) and anchors.dimension != spec.reweights[-1].dimension:
        raise DimensionMismatchError(
            f"anchor dimension {anchors.dimension} does not match existing "
            f"re-weighting dimension {spec.reweights[-1].dimension}"
        )
    return replace(spec, reweights=spec.reweights + (anchors,))


# ---------------------------------------------------------------------
# vectorised 2-kernel matrices
# ---------------------------------------------------------------------


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _free_pair_matrix(spec, A, B):
    flat = _flatten(spec)
    if flat is None:
        G = A @ B.T
        if spec.kind == "linear":
            return G
        if spec.kind == "polynomial":
            return (1.0 + G) ** spec.degree
        if spec.kind == "exponential":
            return np.exp(G / spec.scale)
        a2 = (A * A).sum(axis=1)
        b2 = (B * B).sum(axis=1)
        return np.exp((2.0 * G - a2[:, None] - b2[None, :]) / (2.0 * spec.scale))
    V, w, c = flat
    S = V.shape[0]
    P, Q = A.shape[0], B.shape[0]
    if S == 0:  # empty re-weighting set: the zero kernel
        return np.zeros((P, Q))
    n = A.shape[1]
    if V.shape[1] != n:
        raise DimensionMismatchError(
            f"points have dimension {n}, anchors have dimension {V.shape[1]}"
        )
    out = np.empty((P, Q))
    if spec.kind == "se":
        ha = 0.5 * (A * A).sum(axis=1)
        hb = 0.5 * (B * B).sum(axis=1)
    rows = max(1, min(P, _CHUNK_BUDGET // max(1, S * Q)))
    for lo in range(0, P, rows):
        hi = min(P, lo + rows)
        Z = (A[lo:hi, None, :] * B[None, :, :]).reshape(-1, n)
        U = Z @ V.T  # (rows*Q, S)
        if spec.kind == "linear":
            vals = U @ w
        elif spec.kind == "polynomial":
            U += 1.0
            vals = U ** spec.degree @ w
        else:
            if spec.kind == "se":
                U -= c[None, :]
                U -= (ha[lo:hi, None] + hb[None, :]).reshape(-1, 1)
            U /= spec.scale
            np.exp(U, out=U)
            vals = U @ w
        out[lo:hi] = vals.reshape(hi - lo, Q)
    return out


def _base_pair_matrix(spec, A, B):
    if spec.kind in FREE_KINDS:
        return _free_pair_matrix(spec, A, B)
    if spec.kind == "matern12":
        return np.exp(-cdist(A, B) / spec.scale)
    if spec.kind == "matern32":
        R = cdist(A, B) * (math.sqrt(3.0) / spec.scale)
        return (1.0 + R) * np.exp(-R)
    if spec.kind == "mixture":
        out = np.zeros((A.shape[0], B.shape[0]))
        for v, child in zip(spec.weights, spec.children):
            if v > 0:
                out += v * pair_matrix(child, A, B)
        return out
    inner = spec.inner
    M = pair_matrix(inner, A, B)
    da = pair_diag(inner, A)
    db = pair_diag(inner, B)
    return np.exp(-(da[:, None] + db[None, :] - 2.0 * M) / (2.0 * spec.scale))


def _check_diag(d, X, what):
    bad = ~(d > 0.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonPositiveDiagonalError(
            f"{what} diagonal {d[i]!r} is not positive at {X[i].tolist()}", X[i]
        )


def pair_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Matrix of 2-kernel values K(a_i, b_j) for rows of A against rows of B."""
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(
            f"left points have dimension {A.shape[1]}, right {B.shape[1]}"
        )
    base = replace(spec, normalized=False)
    M = _base_pair_matrix(base, A, B)
    if spec.normalized:
        da = _base_pair_diag(base, A)
        db = _base_pair_diag(base, B)
        _check_diag(da, A, "2-kernel")
        _check_diag(db, B, "2-kernel")
        M = M / np.sqrt(np.outer(da, db))
    return M


def _base_pair_diag(spec, A):
    if spec.kind in FREE_KINDS:
        flat = _flatten(spec)
        if flat is None:
            if spec.kind == "se":
                return np.ones(A.shape[0])
            g = (A * A).sum(axis=1)
            if spec.kind == "linear":
                return g
            if spec.kind == "polynomial":
                return (1.0 + g) ** spec.degree
            return np.exp(g / spec.scale)
        V, w, c = flat
        if V.shape[0] == 0:
            return np.zeros(A.shape[0])
        U = (A * A) @ V.T
        if spec.kind == "linear":
            return U @ w
        if spec.kind == "polynomial":
            return (1.0 + U) ** spec.degree @ w
        if spec.kind == "exponential":
            return np.exp(U / spec.scale) @ w
        U -= c[None, :]
        U -= (A * A).sum(axis=1)[:, None]
        return np.exp(U / spec.scale) @ w
    if spec.kind in ("matern12", "matern32"):
        return np.ones(A.shape[0])
    if spec.kind == "mixture":
        out = np.zeros(A.shape[0])
        for v, child in zip(spec.weights, spec.children):
            if v > 0:
                out += v * pair_diag(child, A)
        return out
    return np.ones(A.shape[0])  # composite: exp(0)


def pair_diag(spec: KernelSpec, A) -> np.ndarray:
    """Vector of 2-kernel diagonal values K(a_i, a_i) for rows of A."""
    A = _as_matrix(A)
    base = replace(spec, normalized=False)
    d = _base_pair_diag(base, A)
    if spec.normalized:
        _check_diag(d, A, "2-kernel")
        return np.ones(A.shape[0])
    return d


def gram(spec: KernelSpec, X, jitter: float = 0.0) -> np.ndarray:
    """Symmetric Gram matrix of the 2-kernel over rows of X.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric; `jitter` is added to the diagonal.
    """
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    X = _as_matrix(X)
    M = pair_matrix(spec, X, X)
    G = np.triu(M) + np.triu(M, 1).T
    if jitter:
        G[np.diag_indices_from(G)] += jitter
    return G
