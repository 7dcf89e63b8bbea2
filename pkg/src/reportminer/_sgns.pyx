# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled skip-gram negative-sampling SGD loop.

Mirrors ``reportminer._sgns_py.sgns_sweep``; randomness is drawn by the caller.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


cdef inline double _log_sigmoid(double x) nogil:
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


def sgns_sweep(double[:, ::1] center_vecs, double[:, ::1] outer_vecs,
               const cnp.int64_t[::1] centers, const cnp.int64_t[::1] outers,
               const cnp.int64_t[:, ::1] negatives, double lr, Py_ssize_t batch,
               double[::1] losses):
    """One SGD step per consecutive block of ``batch`` pairs.

    Each step follows the gradient of the block's mean loss, evaluated at the
    parameters from before the step. Updates are in place; per-pair losses
    go to ``losses``.
    """
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t k = negatives.shape[1]
    cdef Py_ssize_t d = center_vecs.shape[1]
    cdef Py_ssize_t start, stop, p, q, j, t
    cdef cnp.int64_t c, w
    cdef double s, coef, loss, step

    if outers.shape[0] != n or negatives.shape[0] != n or losses.shape[0] != n:
        raise ValueError("pair arrays differ in length")
    if outer_vecs.shape[1] != d:
        raise ValueError("dimension mismatch between parameter matrices")
    if batch < 1:
        raise ValueError("batch must be >= 1")

    cdef double[:, ::1] coefs = np.zeros((batch, k + 1))
    cdef double[:, ::1] grads = np.zeros((batch, d))

    with nogil:
        start = 0
        while start < n:
            stop = start + batch
            if stop > n:
                stop = n
            step = lr / (stop - start)
            # scores and loss derivatives at the pre-step parameters
            for p in range(start, stop):
                q = p - start
                c = centers[p]
                loss = 0.0
                for j in range(k + 1):
                    w = outers[p] if j == 0 else negatives[p, j - 1]
                    s = 0.0
                    for t in range(d):
                        s = s + outer_vecs[w, t] * center_vecs[c, t]
                    if j == 0:
                        loss = -_log_sigmoid(s)
                        coefs[q, 0] = -_sigmoid(-s)
                    else:
                        loss = loss - _log_sigmoid(-s)
                        coefs[q, j] = _sigmoid(s)
                losses[p] = loss
                for t in range(d):
                    grads[q, t] = 0.0
                for j in range(k + 1):
                    w = outers[p] if j == 0 else negatives[p, j - 1]
                    coef = coefs[q, j]
                    for t in range(d):
                        grads[q, t] = grads[q, t] + coef * outer_vecs[w, t]
            for p in range(start, stop):
                q = p - start
                c = centers[p]
                for j in range(k + 1):
                    w = outers[p] if j == 0 else negatives[p, j - 1]
                    coef = step * coefs[q, j]
                    for t in range(d):
                        outer_vecs[w, t] = outer_vecs[w, t] - coef * center_vecs[c, t]
            for p in range(start, stop):
                q = p - start
                c = centers[p]
                for t in range(d):
                    center_vecs[c, t] = center_vecs[c, t] - step * grads[q, t]
            start = stop
