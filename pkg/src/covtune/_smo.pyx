# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SMO solvers: the hot inner loops behind the SVM duals.

Semantics mirror covtune._smo_pure exactly (same pair selection, same exact
one-dimensional subproblems, same stopping rules); the pure module is the
fallback when this extension is unavailable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def smo_svr(K, y, double box, double eps, double tol=1e-8,
            long max_iter=100000, alpha0=None, bint record=False):
    """Solve min 0.5*a'Ka + eps*|a|_1 - y'a  s.t.  sum(a)=0, |a_i| <= box.

    Returns (alpha, iterations, converged, objective_history_or_None).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Km = \
        np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = \
        np.asarray(y, dtype=np.float64).ravel()
    cdef Py_ssize_t n = yv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha
    if alpha0 is None:
        alpha = np.zeros(n)
    else:
        alpha = np.array(alpha0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = Km.dot(alpha) - yv
    cdef double obj = 0.5 * float(alpha.dot(g - yv)) + eps * float(np.abs(alpha).sum())
    history = [obj] if record else None
    cdef double thr = 1e-12 * (1.0 + box)
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t i, j, k
    cdef double su, sd, best_up, best_dn, eta, lo, hi, gij, ai, aj
    cdef double t, phi, best_t, best_phi, cand, si, sj
    cdef double[10] cands
    cdef int ncand, c
    cdef double* gp = &g[0]
    cdef double* ap = &alpha[0]
    cdef double* kp = &Km[0, 0]

    while it < max_iter:
        best_up = INFINITY
        best_dn = -INFINITY
        i = -1
        j = -1
        for k in range(n):
            su = gp[k] + (eps if ap[k] >= 0.0 else -eps)
            sd = gp[k] + (eps if ap[k] > 0.0 else -eps)
            if ap[k] < box - thr and su < best_up:
                best_up = su
                i = k
            if ap[k] > -box + thr and sd > best_dn:
                best_dn = sd
                j = k
        if i < 0 or j < 0:
            converged = True
            break
        if best_dn - best_up < tol:
            converged = True
            break
        eta = kp[i * n + i] + kp[j * n + j] - 2.0 * kp[i * n + j]
        ai = ap[i]
        aj = ap[j]
        gij = gp[i] - gp[j]
        lo = -box - ai
        if aj - box > lo:
            lo = aj - box
        hi = box - ai
        if aj + box < hi:
            hi = aj + box
        cands[0] = lo
        cands[1] = hi
        ncand = 2
        if lo < -ai < hi:
            cands[ncand] = -ai
            ncand += 1
        if lo < aj < hi:
            cands[ncand] = aj
            ncand += 1
        if eta > 0.0:
            for c in range(4):
                si = 1.0 if c < 2 else -1.0
                sj = 1.0 if c % 2 == 0 else -1.0
                cand = -(gij + eps * (si - sj)) / eta
                if lo < cand < hi:
                    cands[ncand] = cand
                    ncand += 1
        best_t = 0.0
        best_phi = 0.0
        for c in range(ncand):
            t = cands[c]
            phi = (0.5 * eta * t * t + gij * t
                   + eps * (fabs(ai + t) - fabs(ai) + fabs(aj - t) - fabs(aj)))
            if phi < best_phi:
                best_t = t
                best_phi = phi
        if best_t == 0.0:
            converged = True
            break
        ap[i] = _clip(ai + best_t, -box, box)
        ap[j] = _clip(aj - best_t, -box, box)
        for k in range(n):
            gp[k] += best_t * (kp[k * n + i] - kp[k * n + j])
        obj += best_phi
        if record:
            history.append(obj)
        it += 1
    return alpha, it, converged, history


def smo_svc(K, y, double box, double tol=1e-8, long max_iter=100000,
            alpha0=None, bint record=False):
    """Solve the two-class dual: min 0.5*ab'Q ab - 1'ab over 0 <= ab <= box,
    y'ab = 0, with Q = (y y') * K.  Returns signed alpha = y * ab.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Km = \
        np.ascontiguousarray(K, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = \
        np.asarray(y, dtype=np.float64).ravel()
    cdef Py_ssize_t n = yv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ab
    if alpha0 is None:
        ab = np.zeros(n)
    else:
        ab = np.abs(np.array(alpha0, dtype=np.float64))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] G = yv * Km.dot(yv * ab) - 1.0
    cdef double obj = 0.5 * float(ab.dot(G + 1.0)) - float(ab.sum())
    history = [obj] if record else None
    cdef double thr = 1e-12 * (1.0 + box)
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t i, j, k
    cdef double m, best_up, best_dn, eta, hi, hi_i, hi_j, t, dphi, yi, yj
    cdef double* gp = &G[0]
    cdef double* abp = &ab[0]
    cdef double* yp = &yv[0]
    cdef double* kp = &Km[0, 0]

    while it < max_iter:
        best_up = -INFINITY
        best_dn = INFINITY
        i = -1
        j = -1
        for k in range(n):
            m = -yp[k] * gp[k]
            if yp[k] > 0.0:
                if abp[k] < box - thr and m > best_up:
                    best_up = m
                    i = k
                if abp[k] > thr and m < best_dn:
                    best_dn = m
                    j = k
            else:
                if abp[k] > thr and m > best_up:
                    best_up = m
                    i = k
                if abp[k] < box - thr and m < best_dn:
                    best_dn = m
                    j = k
        if i < 0 or j < 0:
            converged = True
            break
        if best_up - best_dn < tol:
            converged = True
            break
        eta = kp[i * n + i] + kp[j * n + j] - 2.0 * kp[i * n + j]
        yi = yp[i]
        yj = yp[j]
        hi_i = box - abp[i] if yi > 0.0 else abp[i]
        hi_j = abp[j] if yj > 0.0 else box - abp[j]
        hi = hi_i if hi_i < hi_j else hi_j
        if hi <= 0.0:  # unreachable with the feasibility masks above
            break
        t = (best_up - best_dn) / eta if eta > 0.0 else hi
        t = _clip(t, 0.0, hi)
        dphi = 0.5 * eta * t * t - (best_up - best_dn) * t
        abp[i] = _clip(abp[i] + yi * t, 0.0, box)
        abp[j] = _clip(abp[j] - yj * t, 0.0, box)
        for k in range(n):
            gp[k] += t * yp[k] * (kp[k * n + i] - kp[k * n + j])
        obj += dphi
        if record:
            history.append(obj)
        it += 1
    return yv * ab, it, converged, history
