"""Pure NumPy SMO solvers: the fallback backend.

Semantics match the compiled extension exactly: greatest-violating-pair
selection, exact one-dimensional subproblems (piecewise quadratic for the
regression tube term), and identical stopping rules.
"""

from __future__ import annotations

import numpy as np

__all__ = ["smo_svr", "smo_svc"]


def _svr_subproblem(eta, gij, ai, aj, eps, lo, hi):
    """Minimise 0.5*eta*t^2 + gij*t + eps*(|ai+t| + |aj-t|) over [lo, hi]."""
    cands = [lo, hi]
    for tb in (-ai, aj):  # kinks of the absolute-value terms
        if lo < tb < hi:
            cands.append(tb)
    if eta > 0.0:
        for si in (1.0, -1.0):
            for sj in (1.0, -1.0):
                t = -(gij + eps * (si - sj)) / eta
                if lo < t < hi:
                    cands.append(t)
    best_t, best_phi = 0.0, 0.0
    for t in cands:
        phi = (
            0.5 * eta * t * t
            + gij * t
            + eps * (abs(ai + t) - abs(ai) + abs(aj - t) - abs(aj))
        )
        if phi < best_phi:
            best_t, best_phi = t, phi
    return best_t, best_phi


def smo_svr(K, y, box, eps, tol=1e-8, max_iter=100000, alpha0=None, record=False):
    """Solve min 0.5*a'Ka + eps*|a|_1 - y'a  s.t.  sum(a)=0, |a_i| <= box.

    Returns (alpha, iterations, converged, objective_history_or_None).
    `alpha0` must be feasible when given (warm start).
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    alpha = np.zeros(n) if alpha0 is None else np.array(alpha0, dtype=float)
    g = K @ alpha - y
    obj = 0.5 * float(alpha @ (g - y)) + eps * float(np.abs(alpha).sum())
    history = [obj] if record else None
    thr = 1e-12 * (1.0 + box)
    it = 0
    converged = False
    while it < max_iter:
        s_up = np.where(alpha >= 0.0, eps, -eps)
        s_dn = np.where(alpha > 0.0, eps, -eps)
        score_up = g + s_up
        score_dn = g + s_dn
        can_up = alpha < box - thr
        can_dn = alpha > -box + thr
        if not can_up.any() or not can_dn.any():
            converged = True
            break
        i = int(np.argmin(np.where(can_up, score_up, np.inf)))
        j = int(np.argmax(np.where(can_dn, score_dn, -np.inf)))
        if score_dn[j] - score_up[i] < tol:
            converged = True
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        lo = max(-box - alpha[i], alpha[j] - box)
        hi = min(box - alpha[i], alpha[j] + box)
        t, dphi = _svr_subproblem(eta, g[i] - g[j], alpha[i], alpha[j], eps, lo, hi)
        if t == 0.0:
            converged = True
            break
        alpha[i] = min(box, max(-box, alpha[i] + t))
        alpha[j] = min(box, max(-box, alpha[j] - t))
        g += t * (K[:, i] - K[:, j])
        obj += dphi
        if record:
            history.append(obj)
        it += 1
    return alpha, it, converged, history


def smo_svc(K, y, box, tol=1e-8, max_iter=100000, alpha0=None, record=False):
    """Solve the two-class dual: min 0.5*ab'Q ab - 1'ab over 0 <= ab <= box,
    y'ab = 0, with Q = (y y') * K.  Returns signed alpha = y * ab.

    Returns (alpha, iterations, converged, objective_history_or_None).
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    ab = np.zeros(n) if alpha0 is None else np.abs(np.array(alpha0, dtype=float))
    G = y * (K @ (y * ab)) - 1.0  # (Q ab)_i - 1
    obj = 0.5 * float(ab @ (G + 1.0)) - float(ab.sum())
    history = [obj] if record else None
    thr = 1e-12 * (1.0 + box)
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        up = (pos & (ab < box - thr)) | (~pos & (ab > thr))
        dn = (pos & (ab > thr)) | (~pos & (ab < box - thr))
        if not up.any() or not dn.any():
            converged = True
            break
        m = -y * G
        i = int(np.argmax(np.where(up, m, -np.inf)))
        j = int(np.argmin(np.where(dn, m, np.inf)))
        violation = m[i] - m[j]
        if violation < tol:
            converged = True
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        # move: ab_i += y_i*t... in the signed variables both step by t along
        # the (e_i - e_j)-ish direction; bounds from the per-class boxes
        if pos[i]:
            lo_i, hi_i = -ab[i], box - ab[i]
        else:
            lo_i, hi_i = ab[i] - box, ab[i]
        if pos[j]:
            lo_j, hi_j = ab[j] - box, ab[j]
        else:
            lo_j, hi_j = -ab[j], box - ab[j]
        hi = min(hi_i, hi_j)
        if hi <= 0.0:  # unreachable with the feasibility masks above
            break
        t = violation / eta if eta > 0.0 else hi
        t = min(hi, max(0.0, t))
        dphi = 0.5 * eta * t * t - violation * t
        yi = 1.0 if pos[i] else -1.0
        yj = 1.0 if pos[j] else -1.0
        ab[i] = min(box, max(0.0, ab[i] + yi * t))
        ab[j] = min(box, max(0.0, ab[j] - yj * t))
        G += t * y * (K[:, i] - K[:, j])
        obj += dphi
        if record:
            history.append(obj)
        it += 1
    return y * ab, it, converged, history
