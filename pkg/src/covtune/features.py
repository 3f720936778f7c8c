"""Explicit truncated monomial feature maps and weights.

This is the slow, combinatorial ground-truth path: kernels in the linear /
polynomial / exponential class equal a weighted inner product of monomial
feature vectors, with weights built from the Taylor coefficients of the
kernel's scalar function and multinomial coefficients.  Tests use it to
cross-check the closed-form evaluators and the re-weighting identity; it is
never used in the optimisation path (the basis size grows as C(n+D, D)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import DimensionMismatchError, KernelSpec

__all__ = [
    "MonomialBasis",
    "taylor_coefficients",
    "monomial_features",
    "feature_weights",
    "oracle_kernel_eval",
    "implied_weight_vector",
    "exponential_tail_bound",
]


@lru_cache(maxsize=64)
def _exponent_tuples(n: int, degree_cap: int):
    """All exponent tuples (k1..kn) with sum <= degree_cap, graded-lex order.

    Graded: lower total degree first; within a degree, lexicographically
    descending in (k1, ..., kn) so that for n=2, D=2 the order is
    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    out = []
    for d in range(degree_cap + 1):
        out.extend(compositions(d, n))
    return tuple(out)


@dataclass(frozen=True)
class MonomialBasis:
    """Monomial exponent basis in n variables up to a total degree cap."""

    n: int
    degree_cap: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("basis needs n >= 1")
        if self.degree_cap < 0:
            raise ValueError("degree cap must be >= 0")

    @property
    def exponents(self):
        return _exponent_tuples(self.n, self.degree_cap)

    def __len__(self):
        return math.comb(self.n + self.degree_cap, self.degree_cap)


def taylor_coefficients(spec: KernelSpec, degree_cap: int) -> np.ndarray:
    """Coefficients of the kernel's scalar function h(u) = sum_q k_q u^q.

    linear: h(u) = u; polynomial of degree q: h(u) = (1+u)^q;
    exponential with scale s: h(u) = exp(u/s).
    """
    kind = spec.kind
    kappa = np.zeros(degree_cap + 1)
    if kind == "linear":
        if degree_cap >= 1:
            kappa[1] = 1.0
    elif kind == "polynomial":
        for j in range(min(spec.degree, degree_cap) + 1):
            kappa[j] = math.comb(spec.degree, j)
    elif kind == "exponential":
        for j in range(degree_cap + 1):
            kappa[j] = spec.scale ** (-j) / math.factorial(j)
    else:
        raise ValueError(
            f"no Taylor expansion around the m-inner product for kind {kind!r} "
            "(the se family is the normalised exponential family)"
        )
    return kappa


def monomial_features(x, basis: MonomialBasis) -> np.ndarray:
    """Feature vector with one monomial x1^k1 * ... * xn^kn per basis entry."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != basis.n:
        raise DimensionMismatchError(
            f"point has dimension {x.shape[0]}, basis has n={basis.n}"
        )
    out = np.empty(len(basis))
    for i, ks in enumerate(basis.exponents):
        v = 1.0
        for xi, k in zip(x, ks):
            if k:
                v *= xi ** k
        out[i] = v
    return out


def feature_weights(spec: KernelSpec, basis: MonomialBasis) -> np.ndarray:
    """Weight vector: sqrt(k_d * multinomial(d; k1..kn)) per basis entry."""
    kappa = taylor_coefficients(spec, basis.degree_cap)
    out = np.empty(len(basis))
    for i, ks in enumerate(basis.exponents):
        d = sum(ks)
        mult = math.factorial(d)
        for k in ks:
            mult //= math.factorial(k)
        out[i] = math.sqrt(kappa[d] * mult)
    return out


def oracle_kernel_eval(spec: KernelSpec, points, basis: MonomialBasis) -> float:
    """Kernel value reconstructed from explicit features and weights.

    Exact for linear/polynomial once the degree cap covers the expansion;
    for the exponential family the result is the Taylor partial sum, with
    `exponential_tail_bound` bounding the truncation error.
    """
    tau2 = feature_weights(spec, basis) ** 2
    acc = tau2.copy()
    for p in points:
        acc *= monomial_features(p, basis)
    return float(acc.sum())


def exponential_tail_bound(u_max: float, scale: float, degree_cap: int) -> float:
    """Bound on the dropped Taylor tail of exp(u/scale) for |u| <= u_max."""
    v = abs(u_max) / scale
    return v ** (degree_cap + 1) / math.factorial(degree_cap + 1) * math.exp(v)


def implied_weight_vector(spec: KernelSpec, basis: MonomialBasis) -> np.ndarray:
    """Feature weights implied by a (possibly repeatedly) re-weighted spec.

    Starts from the base kind's weights and folds in each anchor set in
    application order: w <- sum_i a_i * w * features(x_i).
    """
    base = KernelSpec(kind=spec.kind, degree=spec.degree, scale=spec.scale)
    w = feature_weights(base, basis)
    for rw in spec.reweights:
        acc = np.zeros(len(basis))
        for x, a in zip(rw.points, rw.alphas):
            acc += a * w * monomial_features(x, basis)
        w = acc
    return w
