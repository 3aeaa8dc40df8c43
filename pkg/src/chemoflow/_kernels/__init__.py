"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``speedups``, built from Cython) is preferred when
it imported cleanly; setting ``CHEMOFLOW_PURE_PYTHON=1`` forces the numpy
reference implementation. Both backends share signatures and chunk over
disjoint row ranges, so results are identical between backends up to
floating-point evaluation order inside a row (which is fixed) and do not
depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import ref

try:
    from . import speedups as _speedups
except ImportError:
    _speedups = None

_FORCE_PURE = os.environ.get("CHEMOFLOW_PURE_PYTHON", "0") == "1"
_backend = ref if (_speedups is None or _FORCE_PURE) else _speedups

_num_threads = 1
_pool = None
_pool_size = 0

# below this many rows per thread, parallel dispatch costs more than it buys
_MIN_ROWS_PER_CHUNK = 2048


def backend_name():
    """Name of the active backend: 'compiled' or 'numpy'."""
    return "numpy" if _backend is ref else "compiled"


def have_speedups():
    return _speedups is not None


def use_backend(name):
    """Switch backend ('compiled' or 'numpy'); used by tests and benchmarks."""
    global _backend
    if name == "numpy":
        _backend = ref
    elif name == "compiled":
        if _speedups is None:
            raise RuntimeError("compiled kernels are not available")
        _backend = _speedups
    else:
        raise ValueError("backend must be 'compiled' or 'numpy', got %r" % (name,))


def set_num_threads(n):
    global _num_threads
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1, got %d" % n)
    _num_threads = min(n, 64)


def get_num_threads():
    return _num_threads


def _get_pool(size):
    global _pool, _pool_size
    if _pool is None or _pool_size != size:
        if _pool is not None:
            _pool.shutdown(wait=True)
        _pool = ThreadPoolExecutor(max_workers=size)
        _pool_size = size
    return _pool


def _dispatch(fn, n_rows, args):
    chunks = min(_num_threads, max(1, n_rows // _MIN_ROWS_PER_CHUNK))
    if chunks <= 1:
        fn(*args, 0, n_rows)
        return
    bounds = np.linspace(0, n_rows, chunks + 1).astype(np.int64)
    pool = _get_pool(chunks)
    futures = [pool.submit(fn, *args, int(bounds[i]), int(bounds[i + 1]))
               for i in range(chunks)]
    for fut in futures:
        fut.result()


def csr_matvec(indptr, indices, data, x, out=None):
    n_rows = indptr.shape[0] - 1
    if out is None:
        out = np.empty(n_rows, dtype=np.float64)
    _dispatch(_backend.csr_matvec, n_rows, (indptr, indices, data, x, out))
    return out


def density_flux_residual(n1, n2, n1p, n2p, w1, w2, neighbor, tau4, meas4,
                          fvel, bnd_out, obs_tau, area, dt,
                          d1, d2, kappa1, kappa2, linear_law, out=None):
    n = n1.shape[0]
    if out is None:
        out = np.empty(2 * n, dtype=np.float64)
    _dispatch(_backend.density_flux_residual, n,
              (n1, n2, n1p, n2p, w1, w2, neighbor, tau4, meas4,
               fvel, bnd_out, obs_tau, area, dt,
               d1, d2, kappa1, kappa2, linear_law, out))
    return out


def density_flux_jacobian(n1, n2, w1, w2, neighbor, tau4, meas4,
                          fvel, bnd_out, obs_tau, area, dt,
                          d1, d2, kappa1, kappa2, linear_law,
                          pos_diag1, pos_nb1, pos_diag2, pos_nb2, data):
    n = n1.shape[0]
    _dispatch(_backend.density_flux_jacobian, n,
              (n1, n2, w1, w2, neighbor, tau4, meas4,
               fvel, bnd_out, obs_tau, area, dt,
               d1, d2, kappa1, kappa2, linear_law,
               pos_diag1, pos_nb1, pos_diag2, pos_nb2, data))
    return data


def bilinear_sample(field, fx, fy, out=None):
    n = fx.shape[0]
    if out is None:
        out = np.empty(n, dtype=np.float64)
    _dispatch(_backend.bilinear_sample, n, (field, fx, fy, out))
    return out
