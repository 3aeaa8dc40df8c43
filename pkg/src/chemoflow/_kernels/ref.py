"""Numpy reference implementations of the hot kernels.

Every function here has a signature-compatible compiled twin in
``speedups.pyx``. All kernels operate on a half-open row/cell range
[start, end) and write only to that slice of the output, so callers can
split work across threads with disjoint writes; reads may touch the full
arrays. Accumulation order is fixed (time term, then W,E,S,N faces), so
repeated runs are bitwise reproducible.
"""

from __future__ import annotations

import numpy as np


def csr_matvec(indptr, indices, data, x, out, start, end):
    """out[start:end] = (A @ x)[start:end] for CSR arrays."""
    lo = indptr[start:end]
    hi = indptr[start + 1:end + 1]
    counts = hi - lo
    prod = data * x[indices]
    if counts.min(initial=1) > 0 and (lo < prod.size).all():
        out[start:end] = np.add.reduceat(prod, lo)
    else:
        # empty rows break reduceat; fall back to bincount on this slice
        nnz = int(hi[-1] - lo[0]) if counts.size else 0
        rows = np.repeat(np.arange(end - start), counts)
        out[start:end] = np.bincount(rows, weights=prod[lo[0]:lo[0] + nnz],
                                     minlength=end - start)


def _species_flux(acc, s, n, w, neighbor, tau4, meas4, fvel, d_coef, kappa, linear_law):
    nK_all = n[s]
    wK_all = w[s]
    for d in range(4):
        nb = neighbor[s, d]
        m = nb >= 0
        if not m.any():
            continue
        idx = nb[m]
        tau = tau4[d]
        meas = meas4[d]
        uf = fvel[s, d][m]
        nK = nK_all[m]
        nL = n[idx]
        dw = w[idx] - wK_all[m]
        nhat = np.minimum(np.maximum(nK, 0.0), np.maximum(nL, 0.0))
        chi = kappa * nhat if linear_law else kappa
        flux = (-d_coef * tau * (nL - nK)
                + tau * chi * dw
                + meas * uf * np.where(uf > 0.0, nK, nL))
        acc[m] += flux


def density_flux_residual(n1, n2, n1p, n2p, w1, w2, neighbor, tau4, meas4,
                          fvel, bnd_out, obs_tau, area, dt,
                          d1, d2, kappa1, kappa2, linear_law,
                          out, start, end):
    """Time derivative plus diffusive/chemotactic/advective fluxes.

    Writes rows [start, end) of the species-1 block and the matching rows
    of the species-2 block (offset by the cell count). Reaction sources
    are applied by the caller.
    """
    n = n1.size
    s = slice(start, end)
    coef = area / dt
    acc1 = coef * (n1[s] - n1p[s]) + (d1 * obs_tau[s] + bnd_out[s]) * n1[s]
    acc2 = coef * (n2[s] - n2p[s]) + (d2 * obs_tau[s] + bnd_out[s]) * n2[s]
    _species_flux(acc1, s, n1, w1, neighbor, tau4, meas4, fvel, d1, kappa1, linear_law)
    _species_flux(acc2, s, n2, w2, neighbor, tau4, meas4, fvel, d2, kappa2, linear_law)
    out[start:end] = acc1
    out[n + start:n + end] = acc2


def _species_jacobian(s, n, w, neighbor, tau4, meas4, fvel, d_coef, kappa,
                      linear_law, diag, pos_nb, data):
    nK_all = n[s]
    wK_all = w[s]
    for d in range(4):
        nb = neighbor[s, d]
        m = nb >= 0
        if not m.any():
            continue
        idx = nb[m]
        tau = tau4[d]
        meas = meas4[d]
        uf = fvel[s, d][m]
        nK = nK_all[m]
        nL = n[idx]
        dw = w[idx] - wK_all[m]
        if linear_law:
            a = np.maximum(nK, 0.0)
            b = np.maximum(nL, 0.0)
            # face value min(a, b); the local cell wins ties
            dhat_dK = ((a <= b) & (nK > 0.0)).astype(float)
            dhat_dL = ((b < a) & (nL > 0.0)).astype(float)
            chem_K = tau * kappa * dhat_dK * dw
            chem_L = tau * kappa * dhat_dL * dw
        else:
            chem_K = 0.0
            chem_L = 0.0
        dK = d_coef * tau + chem_K + meas * np.maximum(uf, 0.0)
        dL = -d_coef * tau + chem_L + meas * np.minimum(uf, 0.0)
        diag[m] += dK
        data[pos_nb[s, d][m]] = dL


def density_flux_jacobian(n1, n2, w1, w2, neighbor, tau4, meas4,
                          fvel, bnd_out, obs_tau, area, dt,
                          d1, d2, kappa1, kappa2, linear_law,
                          pos_diag1, pos_nb1, pos_diag2, pos_nb2,
                          data, start, end):
    """Fill the flux/time part of the density Jacobian (CSR values).

    ``pos_*`` map cells (and directions) to slots in ``data``. Reaction
    derivatives and the cross-species diagonal are written by the caller,
    which must do so after this kernel (diagonal slots are assigned here,
    not accumulated).
    """
    s = slice(start, end)
    coef = area / dt
    diag1 = coef + d1 * obs_tau[s] + bnd_out[s]
    diag2 = coef + d2 * obs_tau[s] + bnd_out[s]
    _species_jacobian(s, n1, w1, neighbor, tau4, meas4, fvel, d1, kappa1,
                      linear_law, diag1, pos_nb1, data)
    _species_jacobian(s, n2, w2, neighbor, tau4, meas4, fvel, d2, kappa2,
                      linear_law, diag2, pos_nb2, data)
    data[pos_diag1[s]] = diag1
    data[pos_diag2[s]] = diag2


def bilinear_sample(field, fx, fy, out, start, end):
    """Sample a 2D node field at fractional indices (fx, fy), clamped.

    ``fx``/``fy`` are in index units of ``field``; points outside the node
    rectangle are clamped to its edge.
    """
    ni, nj = field.shape
    x = np.clip(fx[start:end], 0.0, ni - 1.0)
    y = np.clip(fy[start:end], 0.0, nj - 1.0)
    i0 = np.minimum(x.astype(np.int64), ni - 2) if ni > 1 else np.zeros(x.size, np.int64)
    j0 = np.minimum(y.astype(np.int64), nj - 2) if nj > 1 else np.zeros(y.size, np.int64)
    tx = x - i0
    ty = y - j0
    i1 = np.minimum(i0 + 1, ni - 1)
    j1 = np.minimum(j0 + 1, nj - 1)
    f00 = field[i0, j0]
    f10 = field[i1, j0]
    f01 = field[i0, j1]
    f11 = field[i1, j1]
    out[start:end] = ((1.0 - tx) * ((1.0 - ty) * f00 + ty * f01)
                      + tx * ((1.0 - ty) * f10 + ty * f11))
