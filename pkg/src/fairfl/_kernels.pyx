# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled softmax-regression kernels.

Parameter layout is the flat vector used everywhere in the package:
``W`` (input_dim x num_classes, row-major) followed by the bias ``b``.
Signatures mirror :mod:`fairfl._kernels_py` exactly.
"""
from libc.math cimport exp
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free

import numpy as np


cdef void _batch_grad(const double[:, ::1] X, const int64_t[::1] y,
                      const int64_t[::1] order, Py_ssize_t start, Py_ssize_t stop,
                      const double[::1] params, Py_ssize_t D, Py_ssize_t C,
                      double* grad, double* probs) noexcept nogil:
    cdef Py_ssize_t r, i, k, c, off = D * C
    cdef double xk, mx, total, scale
    cdef const double* W = &params[0]
    cdef const double* b = W + off
    cdef const double* x
    cdef const double* w
    cdef double* g

    for k in range(off + C):
        grad[k] = 0.0

    for r in range(start, stop):
        i = order[r]
        x = &X[i, 0]
        for c in range(C):
            probs[c] = b[c]
        for k in range(D):
            xk = x[k]
            w = W + k * C
            for c in range(C):
                probs[c] += xk * w[c]
        mx = probs[0]
        for c in range(1, C):
            if probs[c] > mx:
                mx = probs[c]
        total = 0.0
        for c in range(C):
            probs[c] = exp(probs[c] - mx)
            total += probs[c]
        for c in range(C):
            probs[c] /= total
        probs[y[i]] -= 1.0
        for k in range(D):
            xk = x[k]
            g = grad + k * C
            for c in range(C):
                g[c] += xk * probs[c]
        g = grad + off
        for c in range(C):
            g[c] += probs[c]

    scale = 1.0 / (stop - start)
    for k in range(off + C):
        grad[k] *= scale


def softmax_regression_grad(const double[::1] params, const double[:, ::1] X,
                            const int64_t[::1] y, Py_ssize_t D, Py_ssize_t C):
    """Mean cross-entropy gradient over all rows of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(D * C + C, dtype=np.float64)
    cdef double[::1] g = out
    cdef int64_t[::1] order = np.arange(n, dtype=np.int64)
    cdef double* probs = <double*> malloc(C * sizeof(double))
    if probs == NULL:
        raise MemoryError()
    try:
        with nogil:
            _batch_grad(X, y, order, 0, n, params, D, C, &g[0], probs)
    finally:
        free(probs)
    return out


def softmax_regression_sgd_epoch(double[::1] params, const double[:, ::1] X,
                                 const int64_t[::1] y, const int64_t[::1] order,
                                 double lr, Py_ssize_t batch_size,
                                 Py_ssize_t D, Py_ssize_t C):
    """One pass of minibatch SGD over ``order``, updating ``params`` in place."""
    cdef Py_ssize_t n = order.shape[0], d = D * C + C
    cdef Py_ssize_t start, stop, k
    cdef double* grad = <double*> malloc(d * sizeof(double))
    cdef double* probs = <double*> malloc(C * sizeof(double))
    if grad == NULL or probs == NULL:
        free(grad)
        free(probs)
        raise MemoryError()
    try:
        with nogil:
            start = 0
            while start < n:
                stop = start + batch_size
                if stop > n:
                    stop = n
                _batch_grad(X, y, order, start, stop, params, D, C, grad, probs)
                for k in range(d):
                    params[k] -= lr * grad[k]
                start = stop
    finally:
        free(grad)
        free(probs)
