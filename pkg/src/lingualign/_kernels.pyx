# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the dense hot loops.

Same contract as lingualign._kernels_py: float64, C-contiguous in/out.
The matrices here are tiny (tens of rows), so plain nogil loops beat the
overhead of dispatching to BLAS.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

BACKEND_NAME = "cython"

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


def matmul(double[:, ::1] a not None, double[:, ::1] b not None):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double aij
    with nogil:
        for i in range(m):
            for l in range(k):
                aij = a[i, l]
                for j in range(n):
                    out[i, j] += aij * b[l, j]
    return out_arr


cdef inline double _sigmoid(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def silu(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    shp = arr.shape
    flat_in = arr.ravel()
    out_arr = np.empty_like(flat_in)
    cdef double[::1] xv = flat_in
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = xv[i] * _sigmoid(xv[i])
    return out_arr.reshape(shp)


def silu_grad(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    shp = arr.shape
    flat_in = arr.ravel()
    out_arr = np.empty_like(flat_in)
    cdef double[::1] xv = flat_in
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double s
    with nogil:
        for i in range(n):
            s = _sigmoid(xv[i])
            ov[i] = s * (1.0 + xv[i] * (1.0 - s))
    return out_arr.reshape(shp)


def gelu(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    shp = arr.shape
    flat_in = arr.ravel()
    out_arr = np.empty_like(flat_in)
    cdef double[::1] xv = flat_in
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v
    with nogil:
        for i in range(n):
            v = xv[i]
            ov[i] = 0.5 * v * (1.0 + tanh(GELU_C * (v + GELU_A * v * v * v)))
    return out_arr.reshape(shp)


def gelu_grad(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    shp = arr.shape
    flat_in = arr.ravel()
    out_arr = np.empty_like(flat_in)
    cdef double[::1] xv = flat_in
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v, t, sech2, d_inner
    with nogil:
        for i in range(n):
            v = xv[i]
            t = tanh(GELU_C * (v + GELU_A * v * v * v))
            sech2 = 1.0 - t * t
            d_inner = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
            ov[i] = 0.5 * (1.0 + t) + 0.5 * v * sech2 * d_inner
    return out_arr.reshape(shp)


def softmax_rows(double[:, ::1] x not None):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    with nogil:
        for i in range(m):
            mx = x[i, 0]
            for j in range(1, n):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(n):
                out[i, j] = exp(x[i, j] - mx)
                s += out[i, j]
            for j in range(n):
                out[i, j] /= s
    return out_arr
