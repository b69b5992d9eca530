# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every routine mirrors ``_pure`` operation for operation so both backends
produce identical bits.
"""
from libc.math cimport sqrt

import numpy as np

ctypedef fused real_t:
    float
    double


def adam_update(real_t[::1] param, const real_t[::1] grad, real_t[::1] m,
                real_t[::1] v, double step, double beta1, double beta2,
                double eps):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef real_t b1 = <real_t>beta1
    cdef real_t c1 = <real_t>(1.0 - beta1)
    cdef real_t b2 = <real_t>beta2
    cdef real_t c2 = <real_t>(1.0 - beta2)
    cdef real_t lr = <real_t>step
    cdef real_t e = <real_t>eps
    cdef real_t g, mi, vi, denom
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = b1 * m[i] + c1 * g
            vi = b2 * v[i] + c2 * (g * g)
            m[i] = mi
            v[i] = vi
            denom = <real_t>sqrt(vi) + e
            param[i] = param[i] - (lr * mi) / denom


def tanh_backward(const real_t[::1] act, real_t[::1] delta):
    cdef Py_ssize_t i, n = act.shape[0]
    cdef real_t a
    with nogil:
        for i in range(n):
            a = act[i]
            delta[i] = delta[i] * (<real_t>1 - a * a)


def sigmoid_backward(const real_t[::1] act, real_t[::1] delta):
    cdef Py_ssize_t i, n = act.shape[0]
    cdef real_t a
    with nogil:
        for i in range(n):
            a = act[i]
            delta[i] = (delta[i] * a) * (<real_t>1 - a)


def interp_linear(const double[:, ::1] re, const double[:, ::1] im,
                  const long long[::1] seg, const double[::1] frac):
    cdef Py_ssize_t b, k, j
    cdef Py_ssize_t nb = re.shape[0], nout = seg.shape[0]
    cdef double t
    out_re = np.empty((nb, nout), dtype=np.float64)
    out_im = np.empty((nb, nout), dtype=np.float64)
    cdef double[:, ::1] ore = out_re
    cdef double[:, ::1] oim = out_im
    with nogil:
        for b in range(nb):
            for k in range(nout):
                j = seg[k]
                t = frac[k]
                ore[b, k] = re[b, j] + (re[b, j + 1] - re[b, j]) * t
                oim[b, k] = im[b, j] + (im[b, j + 1] - im[b, j]) * t
    return out_re, out_im
