# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled face-energy kernels (same contract as ``_kernels_py``)."""

import numpy as np
from libc.math cimport pow, sqrt


cdef inline double _weight(double sq, double p) nogil:
    # (sq)^(p/2 - 1) with fast paths for the common exponents
    if p == 2.0:
        return 1.0
    if sq <= 0.0:
        return 0.0
    if p == 4.0:
        return sq
    if p == 3.0:
        return sqrt(sq)
    if p == 6.0:
        return sq * sq
    return pow(sq, 0.5 * p - 1.0)


def energy_grad_1d(double[::1] f, double[:, ::1] gi, double[::1] sg,
                   double h, double p, double delta):
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t i, ip, im
    cdef double d, sq, wgt, energy = 0.0
    cdef double dp = pow(delta, p)
    flux_arr = np.empty(n)
    grad_arr = np.empty(n)
    cdef double[::1] flux = flux_arr
    cdef double[::1] grad = grad_arr
    with nogil:
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            d = (f[ip] - f[i]) / h
            sq = gi[0, i] * d * d + delta * delta
            wgt = _weight(sq, p)
            energy += (sq * wgt - dp) / p * sg[i]
            flux[i] = h * wgt * sg[i] * gi[0, i] * d
        for i in range(n):
            im = i - 1 if i > 0 else n - 1
            grad[i] = (flux[im] - flux[i]) / h
    return h * energy, grad_arr


def energy_grad_2d(double[:, ::1] f, double[:, :, :, ::1] gi, double[:, :, ::1] sg,
                   double h1, double h2, double p, double delta):
    cdef Py_ssize_t n1 = f.shape[0], n2 = f.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm, ipp, jpp
    cdef double w = 0.5 * h1 * h2
    cdef double dp = pow(delta, p)
    cdef double d1, d2, sq, wgt, s, energy = 0.0
    cdef double g11, g12, g22
    fnx_arr = np.empty((n1, n2))
    ftx_arr = np.empty((n1, n2))
    fny_arr = np.empty((n1, n2))
    fty_arr = np.empty((n1, n2))
    grad_arr = np.zeros((n1, n2))
    cdef double[:, ::1] fnx = fnx_arr
    cdef double[:, ::1] ftx = ftx_arr
    cdef double[:, ::1] fny = fny_arr
    cdef double[:, ::1] fty = fty_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double qm, qp

    with nogil:
        for i in range(n1):
            ip = i + 1 if i + 1 < n1 else 0
            im = i - 1 if i > 0 else n1 - 1
            ipp = ip + 1 if ip + 1 < n1 else 0
            for j in range(n2):
                jp = j + 1 if j + 1 < n2 else 0
                jm = j - 1 if j > 0 else n2 - 1
                jpp = jp + 1 if jp + 1 < n2 else 0

                # x-face (i+1/2, j)
                d1 = (f[ip, j] - f[i, j]) / h1
                d2 = 0.25 * (f[i, jp] - f[i, jm] + f[ip, jp] - f[ip, jm]) / h2
                g11 = gi[0, 0, i, j]
                g12 = gi[0, 1, i, j]
                g22 = gi[0, 2, i, j]
                sq = g11 * d1 * d1 + 2.0 * g12 * d1 * d2 + g22 * d2 * d2 + delta * delta
                wgt = _weight(sq, p)
                s = sg[0, i, j]
                energy += (sq * wgt - dp) / p * s
                fnx[i, j] = w * wgt * s * (g11 * d1 + g12 * d2)
                ftx[i, j] = w * wgt * s * (g12 * d1 + g22 * d2)

                # y-face (i, j+1/2)
                d2 = (f[i, jp] - f[i, j]) / h2
                d1 = 0.25 * (f[ip, j] - f[im, j] + f[ip, jp] - f[im, jp]) / h1
                g11 = gi[1, 0, i, j]
                g12 = gi[1, 1, i, j]
                g22 = gi[1, 2, i, j]
                sq = g11 * d1 * d1 + 2.0 * g12 * d1 * d2 + g22 * d2 * d2 + delta * delta
                wgt = _weight(sq, p)
                s = sg[1, i, j]
                energy += (sq * wgt - dp) / p * s
                fny[i, j] = w * wgt * s * (g12 * d1 + g22 * d2)
                fty[i, j] = w * wgt * s * (g11 * d1 + g12 * d2)

        for i in range(n1):
            ip = i + 1 if i + 1 < n1 else 0
            im = i - 1 if i > 0 else n1 - 1
            for j in range(n2):
                jp = j + 1 if j + 1 < n2 else 0
                jm = j - 1 if j > 0 else n2 - 1
                grad[i, j] += (fnx[im, j] - fnx[i, j]) / h1
                grad[i, j] += (fny[i, jm] - fny[i, j]) / h2
                # tangential x-face flux, averaged to (i, j) from faces i-1/2, i+1/2
                qm = 0.5 * (ftx[i, jm] + ftx[im, jm])
                qp = 0.5 * (ftx[i, jp] + ftx[im, jp])
                grad[i, j] += (qm - qp) / (2.0 * h2)
                qm = 0.5 * (fty[im, j] + fty[im, jm])
                qp = 0.5 * (fty[ip, j] + fty[ip, jm])
                grad[i, j] += (qm - qp) / (2.0 * h1)
    return w * energy, grad_arr
