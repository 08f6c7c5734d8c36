# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused elementwise/reduction loops for the hot ops.

Formula-identical to the numpy fallback in ``kernels.py``; the only
difference is accumulation order inside row reductions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

cdef double GELU_CUBIC = 0.044715
cdef double GELU_SCALE = 0.7978845608028654


def gelu_fwd(double[::1] x not None):
    cdef Py_ssize_t i, n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double v, inner
    for i in range(n):
        v = x[i]
        inner = GELU_SCALE * (v + GELU_CUBIC * v * v * v)
        out[i] = 0.5 * v * (1.0 + tanh(inner))
    return out_arr


def gelu_bwd(double[::1] x not None, double[::1] dy not None):
    cdef Py_ssize_t i, n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double v, inner, t, dinner
    for i in range(n):
        v = x[i]
        inner = GELU_SCALE * (v + GELU_CUBIC * v * v * v)
        t = tanh(inner)
        dinner = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * v * v)
        out[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner)
    return out_arr


def softmax2d_fwd(double[:, ::1] x not None):
    cdef Py_ssize_t i, j, n = x.shape[0], h = x.shape[1]
    out_arr = np.empty((n, h), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double m, s
    for i in range(n):
        m = x[i, 0]
        for j in range(1, h):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(h):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(h):
            out[i, j] /= s
    return out_arr


def softmax2d_bwd(double[:, ::1] y not None, double[:, ::1] dy not None):
    cdef Py_ssize_t i, j, n = y.shape[0], h = y.shape[1]
    out_arr = np.empty((n, h), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(h):
            inner += dy[i, j] * y[i, j]
        for j in range(h):
            out[i, j] = y[i, j] * (dy[i, j] - inner)
    return out_arr


def layernorm2d_fwd(double[:, ::1] x not None, double[::1] gamma not None,
                    double[::1] beta not None, double eps):
    cdef Py_ssize_t i, j, n = x.shape[0], h = x.shape[1]
    y_arr = np.empty((n, h), dtype=np.float64)
    xhat_arr = np.empty((n, h), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef double mean, var, d, r
    for i in range(n):
        mean = 0.0
        for j in range(h):
            mean += x[i, j]
        mean /= h
        var = 0.0
        for j in range(h):
            d = x[i, j] - mean
            var += d * d
        var /= h
        r = 1.0 / sqrt(var + eps)
        rstd[i] = r
        for j in range(h):
            xhat[i, j] = (x[i, j] - mean) * r
            y[i, j] = xhat[i, j] * gamma[j] + beta[j]
    return y_arr, xhat_arr, rstd_arr


def layernorm2d_bwd(double[:, ::1] xhat not None, double[::1] rstd not None,
                    double[::1] gamma not None, double[:, ::1] dy not None):
    cdef Py_ssize_t i, j, n = xhat.shape[0], h = xhat.shape[1]
    dx_arr = np.empty((n, h), dtype=np.float64)
    dgamma_arr = np.zeros(h, dtype=np.float64)
    dbeta_arr = np.zeros(h, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef double m1, m2, g
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(h):
            g = dy[i, j] * gamma[j]
            m1 += g
            m2 += g * xhat[i, j]
        m1 /= h
        m2 /= h
        for j in range(h):
            dx[i, j] = rstd[i] * (dy[i, j] * gamma[j] - m1 - xhat[i, j] * m2)
            dgamma[j] += dy[i, j] * xhat[i, j]
            dbeta[j] += dy[i, j]
    return dx_arr, dgamma_arr, dbeta_arr
