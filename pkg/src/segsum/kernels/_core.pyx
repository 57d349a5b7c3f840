# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled row-wise kernels; semantics match kernels/reference.py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def softmax_rows_fwd(cnp.ndarray[cnp.float64_t, ndim=2] scores):
    cdef Py_ssize_t n = scores.shape[0], d = scores.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, d))
    cdef cnp.float64_t[:, ::1] s = np.ascontiguousarray(scores)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double m, z
    for i in range(n):
        m = s[i, 0]
        for j in range(1, d):
            if s[i, j] > m:
                m = s[i, j]
        z = 0.0
        for j in range(d):
            o[i, j] = exp(s[i, j] - m)
            z += o[i, j]
        for j in range(d):
            o[i, j] /= z
    return out


def softmax_rows_bwd(cnp.ndarray[cnp.float64_t, ndim=2] probs,
                     cnp.ndarray[cnp.float64_t, ndim=2] grad_out):
    cdef Py_ssize_t n = probs.shape[0], d = probs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, d))
    cdef cnp.float64_t[:, ::1] p = np.ascontiguousarray(probs)
    cdef cnp.float64_t[:, ::1] g = np.ascontiguousarray(grad_out)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += p[i, j] * g[i, j]
        for j in range(d):
            o[i, j] = p[i, j] * (g[i, j] - inner)
    return out


def layernorm_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xhat = np.empty((n, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] rstd = np.empty((n, 1))
    cdef cnp.float64_t[:, ::1] xv = np.ascontiguousarray(x)
    cdef cnp.float64_t[:, ::1] hv = xhat
    cdef cnp.float64_t[:, ::1] rv = rstd
    cdef Py_ssize_t i, j
    cdef double mu, var, r, diff
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += xv[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            diff = xv[i, j] - mu
            var += diff * diff
        var /= d
        r = 1.0 / sqrt(var + eps)
        rv[i, 0] = r
        for j in range(d):
            hv[i, j] = (xv[i, j] - mu) * r
    return xhat, rstd


def layernorm_bwd(cnp.ndarray[cnp.float64_t, ndim=2] xhat,
                  cnp.ndarray[cnp.float64_t, ndim=2] rstd,
                  cnp.ndarray[cnp.float64_t, ndim=2] grad_xhat):
    cdef Py_ssize_t n = xhat.shape[0], d = xhat.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, d))
    cdef cnp.float64_t[:, ::1] h = np.ascontiguousarray(xhat)
    cdef cnp.float64_t[:, ::1] r = np.ascontiguousarray(rstd)
    cdef cnp.float64_t[:, ::1] g = np.ascontiguousarray(grad_xhat)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double mg, mgx
    for i in range(n):
        mg = 0.0
        mgx = 0.0
        for j in range(d):
            mg += g[i, j]
            mgx += g[i, j] * h[i, j]
        mg /= d
        mgx /= d
        for j in range(d):
            o[i, j] = r[i, 0] * (g[i, j] - mg - h[i, j] * mgx)
    return out


def cross_entropy_fwd(cnp.ndarray[cnp.float64_t, ndim=2] logits,
                      cnp.ndarray[cnp.int64_t, ndim=1] targets):
    cdef Py_ssize_t n = logits.shape[0], d = logits.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nll = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.empty((n, d))
    cdef cnp.float64_t[:, ::1] lv = np.ascontiguousarray(logits)
    cdef cnp.float64_t[:, ::1] pv = probs
    cdef cnp.float64_t[::1] nv = nll
    cdef cnp.int64_t[::1] tv = np.ascontiguousarray(targets)
    cdef Py_ssize_t i, j
    cdef double m, z
    for i in range(n):
        m = lv[i, 0]
        for j in range(1, d):
            if lv[i, j] > m:
                m = lv[i, j]
        z = 0.0
        for j in range(d):
            pv[i, j] = exp(lv[i, j] - m)
            z += pv[i, j]
        for j in range(d):
            pv[i, j] /= z
        if tv[i] >= 0:
            nv[i] = log(z) + m - lv[i, tv[i]]
    return nll, probs


def cross_entropy_bwd(cnp.ndarray[cnp.float64_t, ndim=2] probs,
                      cnp.ndarray[cnp.int64_t, ndim=1] targets,
                      cnp.ndarray[cnp.float64_t, ndim=1] grad_nll):
    cdef Py_ssize_t n = probs.shape[0], d = probs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, d))
    cdef cnp.float64_t[:, ::1] pv = np.ascontiguousarray(probs)
    cdef cnp.float64_t[::1] gv = np.ascontiguousarray(grad_nll)
    cdef cnp.int64_t[::1] tv = np.ascontiguousarray(targets)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    for i in range(n):
        if tv[i] < 0:
            continue
        for j in range(d):
            o[i, j] = pv[i, j] * gv[i]
        o[i, tv[i]] -= gv[i]
    return out
