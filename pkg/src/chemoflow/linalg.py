"""Sparse CSR matrices, restarted GMRES, and a damped Newton driver.

The pieces here are deliberately small: CSR storage with a deterministic
row-wise matvec, GMRES(m) with Givens rotations that never reports a stale
iterate as converged, a dense direct solve for cross-checking, and a
backtracking Newton loop that propagates linear-solver failures with
their iteration index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class NewtonError(RuntimeError):
    """Newton iteration aborted (NaN residual, linear solve failure, ...)."""

    def __init__(self, message, iteration=None, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = list(history) if history is not None else []


@dataclass
class SparseMatrix:
    """CSR matrix; column indices strictly increasing within each row."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coo(cls, rows, cols, vals, n_rows, n_cols):
        """Build CSR from triplets. Duplicate (row, col) pairs are an error."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols, vals must have identical shapes")
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows = rows[order]
        cols = cols[order]
        vals = vals[order]
        if rows.size > 1:
            same = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if same.any():
                k = int(np.flatnonzero(same)[0])
                raise ValueError("duplicate entry at (%d, %d)" % (rows[k], cols[k]))
        row_offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(row_offsets, rows + 1, 1)
        np.cumsum(row_offsets, out=row_offsets)
        return cls(n_rows, n_cols, row_offsets,
                   cols.astype(np.int32), vals.copy())

    def validate(self):
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets has wrong length")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.values.size:
            raise ValueError("row_offsets endpoints inconsistent with values")
        if (np.diff(self.row_offsets) < 0).any():
            raise ValueError("row_offsets must be non-decreasing")
        for k in range(self.n_rows):
            lo, hi = self.row_offsets[k], self.row_offsets[k + 1]
            if (np.diff(self.column_indices[lo:hi]) <= 0).any():
                raise ValueError("column indices not strictly increasing in row %d" % k)

    @property
    def nnz(self):
        return self.values.size

    def matvec(self, x, out=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError("shape mismatch: matrix is %d x %d, vector has %d"
                             % (self.n_rows, self.n_cols, x.size))
        return _kernels.csr_matvec(self.row_offsets, self.column_indices,
                                   self.values, x, out=out)

    def diagonal(self):
        d = np.zeros(min(self.n_rows, self.n_cols), dtype=np.float64)
        for k in range(d.size):
            lo, hi = self.row_offsets[k], self.row_offsets[k + 1]
            j = np.searchsorted(self.column_indices[lo:hi], k)
            if j < hi - lo and self.column_indices[lo + j] == k:
                d[k] = self.values[lo + j]
        return d

    def to_dense(self):
        dense = np.zeros((self.n_rows, self.n_cols), dtype=np.float64)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        dense[rows, self.column_indices] = self.values
        return dense


def spmv(A, x, out=None):
    """y = A @ x with a fixed left-to-right per-row summation order."""
    return A.matvec(x, out=out)


def dense_solve(A, b):
    """Direct solve through a dense factorization; testing fallback."""
    if isinstance(A, SparseMatrix):
        A = A.to_dense()
    return np.linalg.solve(np.asarray(A, dtype=np.float64),
                           np.asarray(b, dtype=np.float64))


def jacobi_diagonal(A):
    """Diagonal of A for use as a Jacobi preconditioner."""
    d = A.diagonal()
    if (d == 0.0).any():
        raise ValueError("zero diagonal entry; Jacobi preconditioner undefined")
    return d


@dataclass
class KrylovConfig:
    rtol: float = 1e-10
    max_iters: int = 500
    restart: int = 30
    # absolute residual floor; keeps near-zero right-hand sides solvable
    # (a purely relative target is unreachable when ||b|| ~ machine noise)
    atol: float = 0.0

    def __post_init__(self):
        if self.rtol <= 0.0:
            raise ValueError("rtol must be positive")
        if self.atol < 0.0:
            raise ValueError("atol must be nonnegative")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iters: int = 25
    damping: str = "backtracking"
    max_halvings: int = 8

    def __post_init__(self):
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.damping not in ("none", "backtracking"):
            raise ValueError("damping must be 'none' or 'backtracking'")


def _as_matvec(A):
    if isinstance(A, SparseMatrix):
        return A.matvec, A.n_cols
    if callable(A):
        return A, None
    raise TypeError("A must be a SparseMatrix or a callable matvec")


def gmres(A, b, x0=None, cfg=None, jacobi=None):
    """Restarted GMRES with modified Gram-Schmidt and Givens rotations.

    Parameters
    ----------
    A : SparseMatrix or callable
        Square operator; a callable must map a vector to A @ v.
    b : ndarray
        Right-hand side.
    x0 : ndarray, optional
        Initial guess, default zero.
    cfg : KrylovConfig, optional
    jacobi : ndarray, optional
        Diagonal for right preconditioning; None disables it.

    Returns
    -------
    x : ndarray
    stats : dict
        converged, n_iters, residual_norms (Givens estimates, one per
        inner iteration, prefixed by the true residual at each cycle
        start), cycle_starts, true_residual, breakdown.

    Convergence is certified only by a true residual ``||b - A x||_2 <=
    rtol * ||b||_2`` computed at a cycle boundary, so a stale iterate is
    never reported as converged.
    """
    cfg = cfg or KrylovConfig()
    matvec, n_from_A = _as_matvec(A)
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if n_from_A is not None and n_from_A != n:
        raise ValueError("operator and right-hand side sizes differ")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if not np.isfinite(b).all():
        raise ValueError("right-hand side contains non-finite entries")

    bnorm = float(np.linalg.norm(b))
    stats = {"converged": False, "n_iters": 0, "residual_norms": [],
             "cycle_starts": [], "true_residual": np.inf,
             "breakdown": False, "target": 0.0}
    if bnorm == 0.0:
        stats.update(converged=True, true_residual=0.0, residual_norms=[0.0],
                     cycle_starts=[0])
        return np.zeros(n), stats
    target = max(cfg.rtol * bnorm, cfg.atol)
    stats["target"] = target

    m = cfg.restart
    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    scale = None if jacobi is None else 1.0 / np.asarray(jacobi, dtype=np.float64)

    iters = 0
    prev_beta = np.inf
    while True:
        r = b - matvec(x)
        beta = float(np.linalg.norm(r))
        stats["cycle_starts"].append(len(stats["residual_norms"]))
        stats["residual_norms"].append(beta)
        stats["true_residual"] = beta
        if beta <= target:
            stats["converged"] = True
            break
        if iters >= cfg.max_iters:
            break
        if stats["breakdown"] and beta >= prev_beta * (1.0 - 1e-12):
            # breakdown without progress: the system is (numerically) singular
            break
        prev_beta = beta

        V[0] = r / beta
        g = np.zeros(m + 1)
        g[0] = beta
        j_used = 0
        happy = False
        for j in range(m):
            if iters >= cfg.max_iters:
                break
            w = matvec(V[j] * scale if scale is not None else V[j])
            # classical Gram-Schmidt with one reorthogonalization pass:
            # same stability class as modified GS, but BLAS-2 instead of a
            # python loop over basis vectors
            h = V[: j + 1] @ w
            w -= h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w -= h2 @ V[: j + 1]
            H[: j + 1, j] = h + h2
            hnext = float(np.linalg.norm(w))
            H[j + 1, j] = hnext
            if hnext > 1e-300:
                V[j + 1] = w / hnext
            else:
                happy = True
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            rad = float(np.hypot(H[j, j], H[j + 1, j]))
            if rad == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / rad, H[j + 1, j] / rad
            H[j, j] = rad
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            j_used = j + 1
            est = abs(float(g[j + 1]))
            stats["residual_norms"].append(est)
            if happy:
                stats["breakdown"] = True
            if est <= target or happy:
                break
        if j_used > 0:
            y = np.zeros(j_used)
            for i in range(j_used - 1, -1, -1):
                y[i] = (g[i] - H[i, i + 1:j_used] @ y[i + 1:]) / H[i, i]
            dx = V[:j_used].T @ y
            x = x + (dx * scale if scale is not None else dx)
        else:
            break
    stats["n_iters"] = iters
    return x, stats


def conjugate_gradient(A, b, x0=None, cfg=None, remove_nullspace=False):
    """Conjugate gradients for symmetric positive (semi)definite systems.

    With ``remove_nullspace=True`` the constant vector is projected out of
    the iterates and the right-hand side, which solves consistent singular
    systems such as pure-Neumann Laplacians. Convergence is certified by an
    explicitly recomputed residual, like the GMRES driver.
    """
    matvec, n = _as_matvec(A)
    cfg = cfg or KrylovConfig()
    b = np.asarray(b, dtype=np.float64)
    if remove_nullspace:
        b = b - b.mean()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if remove_nullspace:
        x -= x.mean()
    r = b - matvec(x)
    target = max(cfg.rtol * float(np.linalg.norm(b)), cfg.atol)
    norms = [float(np.linalg.norm(r))]
    stats = {"converged": False, "n_iters": 0, "residual_norms": norms,
             "true_residual": norms[-1], "target": target}
    if norms[-1] <= target:
        stats["converged"] = True
        return x, stats
    p = r.copy()
    rho = float(r @ r)
    for k in range(1, cfg.max_iters + 1):
        Ap = matvec(p)
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        alpha = rho / denom
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        norms.append(rnorm)
        stats["n_iters"] = k
        if rnorm <= target:
            if remove_nullspace:
                x -= x.mean()
            r = b - matvec(x)
            true_r = float(np.linalg.norm(r))
            stats["true_residual"] = true_r
            norms[-1] = true_r
            if true_r <= target * (1.0 + 1e-8):
                stats["converged"] = True
                return x, stats
            # recursion drifted from the true residual: restart from it
            p = r.copy()
            rho = float(r @ r)
            continue
        rho_new = float(r @ r)
        p = r + (rho_new / rho) * p
        rho = rho_new
    if remove_nullspace:
        x -= x.mean()
    stats["true_residual"] = float(np.linalg.norm(b - matvec(x)))
    return x, stats


def newton(residual, jacobian, x0, cfg=None, krylov=None, linear_solver="gmres"):
    """Damped Newton iteration with an analytic Jacobian.

    Returns ``(x, stats)``; non-convergence within ``max_iters`` is
    reported in ``stats`` rather than raised. NaNs in the residual and
    linear-solver failures raise :class:`NewtonError` with the iteration
    index and residual history attached.
    """
    cfg = cfg or NewtonConfig()
    krylov = krylov or KrylovConfig()
    x = np.array(x0, dtype=np.float64)
    F = np.asarray(residual(x), dtype=np.float64)
    if not np.isfinite(F).all():
        raise NewtonError("residual is not finite at the initial guess",
                          iteration=0)
    fnorm = float(np.abs(F).max(initial=0.0))
    history = [fnorm]
    tol = max(cfg.abs_tol, cfg.rel_tol * fnorm)
    stats = {"converged": fnorm <= tol, "n_iters": 0,
             "residual_history": history, "tol": tol, "linear_stats": []}
    if stats["converged"]:
        return x, stats

    for k in range(1, cfg.max_iters + 1):
        J = jacobian(x)
        if linear_solver == "dense":
            dx = dense_solve(J, -F)
            lin = {"converged": True, "n_iters": 0}
        else:
            dx, lin = gmres(J, -F, cfg=krylov)
            if not lin["converged"]:
                raise NewtonError(
                    "linear solve failed at Newton iteration %d "
                    "(true residual %.3e, target %.3e)"
                    % (k, lin["true_residual"], lin["target"]),
                    iteration=k, history=history)
        stats["linear_stats"].append(lin)

        lam = 1.0
        accepted = False
        halvings = cfg.max_halvings if cfg.damping == "backtracking" else 0
        for _ in range(halvings + 1):
            x_try = x + lam * dx
            F_try = np.asarray(residual(x_try), dtype=np.float64)
            if np.isfinite(F_try).all():
                fnorm_try = float(np.abs(F_try).max(initial=0.0))
                if fnorm_try < fnorm or halvings == 0:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if not np.isfinite(F_try).all():
                raise NewtonError("residual is not finite at iteration %d" % k,
                                  iteration=k, history=history)
            # monotone decrease is unattainable at roundoff level; accept
            # the smallest step unless it is clearly worse
            if fnorm_try > fnorm * (1.0 + 1e-8):
                stats["n_iters"] = k
                history.append(fnorm_try)
                return x, stats
        x, F, fnorm = x_try, F_try, fnorm_try
        history.append(fnorm)
        stats["n_iters"] = k
        if fnorm <= tol:
            stats["converged"] = True
            return x, stats
    return x, stats


def check_jacobian(residual, jacobian, x, h=1e-6):
    """Largest relative gap between the analytic and a central-difference
    Jacobian, measured over the stored sparsity pattern only."""
    if h <= 0.0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=np.float64)
    J = jacobian(x)
    n = x.size
    fd = np.zeros((J.n_rows, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fd[:, j] = (np.asarray(residual(xp)) - np.asarray(residual(xm))) / (2.0 * h)
    worst = 0.0
    for i in range(J.n_rows):
        lo, hi = J.row_offsets[i], J.row_offsets[i + 1]
        for p in range(lo, hi):
            jcol = J.column_indices[p]
            val = J.values[p]
            gap = abs(val - fd[i, jcol]) / (1.0 + abs(val))
            if gap > worst:
                worst = gap
    return float(worst)
