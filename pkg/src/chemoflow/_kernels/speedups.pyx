# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ref.py.

Signatures, accumulation order, and expression trees mirror the numpy
reference exactly (the build disables FP contraction), so both backends
produce bitwise-identical results. All loops release the GIL, which lets
the chunked dispatcher in __init__.py run them on real threads.
"""

import numpy as np

cimport cython


def csr_matvec(const long long[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x,
               double[::1] out, Py_ssize_t start, Py_ssize_t end):
    cdef Py_ssize_t i, p
    cdef double acc
    with nogil:
        for i in range(start, end):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * x[indices[p]]
            out[i] = acc


def density_flux_residual(const double[::1] n1, const double[::1] n2,
                          const double[::1] n1p, const double[::1] n2p,
                          const double[::1] w1, const double[::1] w2,
                          const int[:, ::1] neighbor,
                          const double[::1] tau4, const double[::1] meas4,
                          const double[:, ::1] fvel,
                          const double[::1] bnd_out, const double[::1] obs_tau,
                          double area, double dt,
                          double d1, double d2, double kappa1, double kappa2,
                          int linear_law,
                          double[::1] out, Py_ssize_t start, Py_ssize_t end):
    cdef Py_ssize_t n = n1.shape[0]
    cdef Py_ssize_t k, d, L
    cdef double coef = area / dt
    cdef double acc1, acc2, tau, meas, uf
    cdef double nK, nL, dw, a, b, nhat, chi, upw
    with nogil:
        for k in range(start, end):
            acc1 = coef * (n1[k] - n1p[k]) + (d1 * obs_tau[k] + bnd_out[k]) * n1[k]
            acc2 = coef * (n2[k] - n2p[k]) + (d2 * obs_tau[k] + bnd_out[k]) * n2[k]
            for d in range(4):
                L = neighbor[k, d]
                if L < 0:
                    continue
                tau = tau4[d]
                meas = meas4[d]
                uf = fvel[k, d]

                nK = n1[k]
                nL = n1[L]
                dw = w1[L] - w1[k]
                a = nK if nK > 0.0 else 0.0
                b = nL if nL > 0.0 else 0.0
                nhat = a if a < b else b
                chi = kappa1 * nhat if linear_law else kappa1
                upw = nK if uf > 0.0 else nL
                acc1 = acc1 + (-d1 * tau * (nL - nK) + tau * chi * dw
                               + meas * uf * upw)

                nK = n2[k]
                nL = n2[L]
                dw = w2[L] - w2[k]
                a = nK if nK > 0.0 else 0.0
                b = nL if nL > 0.0 else 0.0
                nhat = a if a < b else b
                chi = kappa2 * nhat if linear_law else kappa2
                upw = nK if uf > 0.0 else nL
                acc2 = acc2 + (-d2 * tau * (nL - nK) + tau * chi * dw
                               + meas * uf * upw)
            out[k] = acc1
            out[n + k] = acc2


def density_flux_jacobian(const double[::1] n1, const double[::1] n2,
                          const double[::1] w1, const double[::1] w2,
                          const int[:, ::1] neighbor,
                          const double[::1] tau4, const double[::1] meas4,
                          const double[:, ::1] fvel,
                          const double[::1] bnd_out, const double[::1] obs_tau,
                          double area, double dt,
                          double d1, double d2, double kappa1, double kappa2,
                          int linear_law,
                          const long long[::1] pos_diag1, const long long[:, ::1] pos_nb1,
                          const long long[::1] pos_diag2, const long long[:, ::1] pos_nb2,
                          double[::1] data, Py_ssize_t start, Py_ssize_t end):
    cdef Py_ssize_t k, d, L
    cdef double coef = area / dt
    cdef double diag1, diag2, tau, meas, uf, upos, uneg
    cdef double nK, nL, dw, a, b, dhatK, dhatL, chemK, chemL
    with nogil:
        for k in range(start, end):
            diag1 = coef + d1 * obs_tau[k] + bnd_out[k]
            diag2 = coef + d2 * obs_tau[k] + bnd_out[k]
            for d in range(4):
                L = neighbor[k, d]
                if L < 0:
                    continue
                tau = tau4[d]
                meas = meas4[d]
                uf = fvel[k, d]
                upos = uf if uf > 0.0 else 0.0
                uneg = uf if uf < 0.0 else 0.0

                nK = n1[k]
                nL = n1[L]
                dw = w1[L] - w1[k]
                if linear_law:
                    a = nK if nK > 0.0 else 0.0
                    b = nL if nL > 0.0 else 0.0
                    dhatK = 1.0 if (a <= b and nK > 0.0) else 0.0
                    dhatL = 1.0 if (b < a and nL > 0.0) else 0.0
                    chemK = tau * kappa1 * dhatK * dw
                    chemL = tau * kappa1 * dhatL * dw
                else:
                    chemK = 0.0
                    chemL = 0.0
                diag1 = diag1 + (d1 * tau + chemK + meas * upos)
                data[pos_nb1[k, d]] = -d1 * tau + chemL + meas * uneg

                nK = n2[k]
                nL = n2[L]
                dw = w2[L] - w2[k]
                if linear_law:
                    a = nK if nK > 0.0 else 0.0
                    b = nL if nL > 0.0 else 0.0
                    dhatK = 1.0 if (a <= b and nK > 0.0) else 0.0
                    dhatL = 1.0 if (b < a and nL > 0.0) else 0.0
                    chemK = tau * kappa2 * dhatK * dw
                    chemL = tau * kappa2 * dhatL * dw
                else:
                    chemK = 0.0
                    chemL = 0.0
                diag2 = diag2 + (d2 * tau + chemK + meas * upos)
                data[pos_nb2[k, d]] = -d2 * tau + chemL + meas * uneg
            data[pos_diag1[k]] = diag1
            data[pos_diag2[k]] = diag2


def bilinear_sample(const double[:, ::1] field, const double[::1] fx,
                    const double[::1] fy, double[::1] out,
                    Py_ssize_t start, Py_ssize_t end):
    cdef Py_ssize_t ni = field.shape[0]
    cdef Py_ssize_t nj = field.shape[1]
    cdef Py_ssize_t p, i0, j0, i1, j1
    cdef double x, y, tx, ty
    with nogil:
        for p in range(start, end):
            x = fx[p]
            if x < 0.0:
                x = 0.0
            elif x > ni - 1.0:
                x = ni - 1.0
            y = fy[p]
            if y < 0.0:
                y = 0.0
            elif y > nj - 1.0:
                y = nj - 1.0
            if ni > 1:
                i0 = <Py_ssize_t> x
                if i0 > ni - 2:
                    i0 = ni - 2
            else:
                i0 = 0
            if nj > 1:
                j0 = <Py_ssize_t> y
                if j0 > nj - 2:
                    j0 = nj - 2
            else:
                j0 = 0
            tx = x - i0
            ty = y - j0
            i1 = i0 + 1 if i0 + 1 < ni else ni - 1
            j1 = j0 + 1 if j0 + 1 < nj else nj - 1
            out[p] = ((1.0 - tx) * ((1.0 - ty) * field[i0, j0] + ty * field[i0, j1])
                      + tx * ((1.0 - ty) * field[i1, j0] + ty * field[i1, j1]))
