"""Implicit finite-volume time stepper for the two-species cross-diffusion
system with chemical signalling.

Each step solves the two linear elliptic chemical systems first (their
right-hand sides use the densities of the previous time level, which
decouples them), then the nonlinear density system by damped Newton.
Two-point fluxes on the structured mesh; the chemotactic coefficient is
evaluated at the min of the positive parts of the two adjacent densities,
which shuts off chemotactic outflow from empty cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, model
from .linalg import (KrylovConfig, NewtonConfig, NewtonError, SparseMatrix,
                     conjugate_gradient, gmres, newton)
from .mesh import BoundaryTag


def face_value(nK, nL):
    """Interface density for the chemotactic flux: min of positive parts."""
    return np.minimum(np.maximum(nK, 0.0), np.maximum(nL, 0.0))


class StepError(RuntimeError):
    """A time step was rejected (Newton or a linear solve failed)."""

    def __init__(self, message, time=None, stats=None):
        super().__init__(message)
        self.time = time
        self.stats = stats


@dataclass
class MacroState:
    n1: np.ndarray
    n2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    t: float = 0.0

    def copy(self):
        return MacroState(self.n1.copy(), self.n2.copy(),
                          self.w1.copy(), self.w2.copy(), self.t)

    def validate(self, n_cells):
        for name in ("n1", "n2", "w1", "w2"):
            arr = getattr(self, name)
            if arr.shape != (n_cells,):
                raise ValueError("%s has %d entries, expected %d"
                                 % (name, arr.size, n_cells))
            if not np.isfinite(arr).all():
                raise ValueError("%s contains non-finite entries" % name)

    @classmethod
    def uniform(cls, n_cells, n1=0.0, n2=0.0):
        z = np.zeros(n_cells)
        return cls(np.full(n_cells, float(n1)), np.full(n_cells, float(n2)),
                   z.copy(), z.copy(), 0.0)


@dataclass
class StepConfig:
    dt: float = 1e-3
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    advection: str = "off"
    implicit_reaction: bool = True
    max_dt_halvings: int = 4
    chemical_sign_literal: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.advection not in ("off", "upwind"):
            raise ValueError("advection must be 'off' or 'upwind'")


class MacroSolver:
    """Stepper bound to one mesh and one parameter set.

    The sparsity patterns of the chemical operator and of the coupled
    density Jacobian are frozen at construction; per-step work only
    rewrites CSR value arrays.
    """

    def __init__(self, msh, params, cfg=None):
        self.mesh = msh
        self.params = params
        self.cfg = cfg or StepConfig()
        N = msh.n_cells
        self.n_cells = N
        self.tau4 = np.asarray(msh.transmissibility, dtype=np.float64)
        self.meas4 = np.asarray(msh.face_measure, dtype=np.float64)
        dist4 = np.asarray(msh.face_distance, dtype=np.float64)

        # Dirichlet-0 transmissibility on obstacle faces (densities only;
        # cell centre to wall is half a cell width)
        obs = np.zeros(N)
        outer = np.zeros((N, 4), dtype=bool)
        for d in range(4):
            tag = msh.boundary_tag[:, d]
            on_obs = tag >= BoundaryTag.OBSTACLE_1
            obs[on_obs] += self.meas4[d] / (0.5 * dist4[d])
            outer[:, d] = (tag >= 0) & (tag < BoundaryTag.OBSTACLE_1)
        self.obs_tau = obs
        self._outer_face = outer

        self._zero_faces = np.zeros((N, 4))
        self._zero_cells = np.zeros(N)

        self._build_chemical_pattern()
        self._build_jacobian_pattern()
        self._w1_warm = None
        self._w2_warm = None

    # -- chemical solves ---------------------------------------------------

    def _build_chemical_pattern(self):
        N = self.n_cells
        cells = np.arange(N, dtype=np.int64)
        rows = [cells]
        cols = [cells]
        for d in range(4):
            m = self.mesh.neighbor[:, d] >= 0
            rows.append(cells[m])
            cols.append(self.mesh.neighbor[m, d].astype(np.int64))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        A = SparseMatrix.from_coo(rows, cols, np.zeros(rows.size), N, N)
        keys = (np.repeat(np.arange(N, dtype=np.int64),
                          np.diff(A.row_offsets))
                * N + A.column_indices)
        self._chem_pattern = A
        self._chem_diag_pos = np.searchsorted(keys, cells * N + cells)
        nbpos = np.full((N, 4), -1, dtype=np.int64)
        for d in range(4):
            m = self.mesh.neighbor[:, d] >= 0
            q = cells[m] * N + self.mesh.neighbor[m, d]
            nbpos[m, d] = np.searchsorted(keys, q)
        self._chem_nb_pos = nbpos

    def boundary_outflux(self, u_faces):
        """Per-cell sum of |face| * max(u_normal, 0) over outer boundary
        faces; the upwind coefficient of advective outflow (inflow carries
        zero concentration)."""
        out = np.zeros(self.n_cells)
        if u_faces is None:
            return out
        for d in range(4):
            m = self._outer_face[:, d]
            out[m] += self.meas4[d] * np.maximum(u_faces[m, d], 0.0)
        return out

    def chemical_matrix(self, alpha, u_faces=None):
        """Discrete -lap(w) + alpha*w operator (plus upwind advection when
        a face velocity field is given), homogeneous Neumann everywhere."""
        A = self._chem_pattern
        vals = np.zeros(A.nnz)
        sgn = -1.0 if self.cfg.chemical_sign_literal else 1.0
        area = self.mesh.cell_area
        diag = np.full(self.n_cells, alpha * area)
        for d in range(4):
            m = self.mesh.neighbor[:, d] >= 0
            diag[m] += sgn * self.tau4[d]
            vals[self._chem_nb_pos[m, d]] = -sgn * self.tau4[d]
        if u_faces is not None:
            diag += self.boundary_outflux(u_faces)
            for d in range(4):
                m = self.mesh.neighbor[:, d] >= 0
                uf = u_faces[m, d]
                diag[m] += self.meas4[d] * np.maximum(uf, 0.0)
                vals[self._chem_nb_pos[m, d]] += self.meas4[d] * np.minimum(uf, 0.0)
        vals[self._chem_diag_pos] = diag
        return SparseMatrix(A.n_rows, A.n_cols, A.row_offsets,
                            A.column_indices, vals)

    def solve_chemical_field(self, source, alpha, u_faces=None, x0=None):
        """Solve -lap(w) + alpha*w = source (cell values).

        The pure elliptic operator is symmetric positive definite, so CG;
        the advective variant is upwind-skewed and falls back to GMRES
        with a restart window wide enough for the stiff diffusive tail.
        """
        A = self.chemical_matrix(alpha, u_faces)
        b = self.mesh.cell_area * np.asarray(source, dtype=np.float64)
        base = self.cfg.krylov
        cfg = KrylovConfig(rtol=base.rtol,
                           max_iters=max(base.max_iters, 4 * self.n_cells),
                           restart=max(base.restart, 200))
        if u_faces is None:
            x, stats = conjugate_gradient(A, b, x0=x0, cfg=cfg)
        else:
            x, stats = gmres(A, b, x0=x0, cfg=cfg)
        if not stats["converged"]:
            raise StepError("chemical solve did not converge "
                            "(true residual %.3e, target %.3e)"
                            % (stats["true_residual"], stats["target"]),
                            stats=stats)
        return x, stats

    def solve_chemicals(self, n1_prev, n2_prev, u_faces=None):
        """Both chemical fields from lagged densities; returns (w1, w2, stats)."""
        p = self.params
        w1, s1 = self.solve_chemical_field(p.beta1 * n2_prev, p.alpha1,
                                           u_faces, x0=self._w1_warm)
        w2, s2 = self.solve_chemical_field(p.beta2 * n1_prev, p.alpha2,
                                           u_faces, x0=self._w2_warm)
        self._w1_warm = w1.copy()
        self._w2_warm = w2.copy()
        return w1, w2, {"chem_gmres_iters": s1["n_iters"] + s2["n_iters"]}

    # -- density system ----------------------------------------------------

    def _build_jacobian_pattern(self):
        N = self.n_cells
        cells = np.arange(N, dtype=np.int64)
        rows = [cells, cells, N + cells, N + cells]
        cols = [cells, N + cells, N + cells, cells]
        for d in range(4):
            m = self.mesh.neighbor[:, d] >= 0
            L = self.mesh.neighbor[m, d].astype(np.int64)
            rows.extend([cells[m], N + cells[m]])
            cols.extend([L, N + L])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        J = SparseMatrix.from_coo(rows, cols, np.zeros(rows.size), 2 * N, 2 * N)
        keys = (np.repeat(np.arange(2 * N, dtype=np.int64),
                          np.diff(J.row_offsets))
                * (2 * N) + J.column_indices)

        def slot(r, c):
            return np.searchsorted(keys, r * (2 * N) + c)

        self._jac = J
        self._pos_diag1 = slot(cells, cells)
        self._pos_cross1 = slot(cells, N + cells)
        self._pos_diag2 = slot(N + cells, N + cells)
        self._pos_cross2 = slot(N + cells, cells)
        nb1 = np.full((N, 4), -1, dtype=np.int64)
        nb2 = np.full((N, 4), -1, dtype=np.int64)
        for d in range(4):
            m = self.mesh.neighbor[:, d] >= 0
            L = self.mesh.neighbor[m, d].astype(np.int64)
            nb1[m, d] = slot(cells[m], L)
            nb2[m, d] = slot(N + cells[m], N + L)
        self._pos_nb1 = nb1
        self._pos_nb2 = nb2

    def _advection_arrays(self, u_faces):
        if self.cfg.advection == "off" or u_faces is None:
            return self._zero_faces, self._zero_cells
        fvel = np.ascontiguousarray(u_faces, dtype=np.float64)
        return fvel, self.boundary_outflux(fvel)

    def density_residual(self, x, n1_prev, n2_prev, w1, w2, dt, u_faces=None):
        """Residual of the implicit density scheme at the iterate x = [n1, n2]."""
        N = self.n_cells
        p = self.params
        n1 = x[:N]
        n2 = x[N:]
        fvel, bnd_out = self._advection_arrays(u_faces)
        linear = 1 if p.chemo_law == "linear" else 0
        out = _kernels.density_flux_residual(
            n1, n2, n1_prev, n2_prev, w1, w2,
            self.mesh.neighbor, self.tau4, self.meas4,
            fvel, bnd_out, self.obs_tau, self.mesh.cell_area, dt,
            p.d1, p.d2, p.kappa1, p.kappa2, linear)
        if self.cfg.implicit_reaction:
            f1, f2 = model.reaction(n1, n2, p)
        else:
            f1, f2 = model.reaction(n1_prev, n2_prev, p)
        out[:N] -= self.mesh.cell_area * f1
        out[N:] -= self.mesh.cell_area * f2
        return out

    def density_jacobian(self, x, w1, w2, dt, u_faces=None):
        """Analytic Jacobian of :meth:`density_residual` in the frozen CSR."""
        N = self.n_cells
        p = self.params
        n1 = x[:N]
        n2 = x[N:]
        fvel, bnd_out = self._advection_arrays(u_faces)
        linear = 1 if p.chemo_law == "linear" else 0
        J = self._jac
        _kernels.density_flux_jacobian(
            n1, n2, w1, w2,
            self.mesh.neighbor, self.tau4, self.meas4,
            fvel, bnd_out, self.obs_tau, self.mesh.cell_area, dt,
            p.d1, p.d2, p.kappa1, p.kappa2, linear,
            self._pos_diag1, self._pos_nb1, self._pos_diag2, self._pos_nb2,
            J.values)
        area = self.mesh.cell_area
        if self.cfg.implicit_reaction:
            d11, d12, d21, d22 = model.reaction_jacobian(n1, n2, p)
            J.values[self._pos_diag1] -= area * d11
            J.values[self._pos_cross1] = -area * d12
            J.values[self._pos_diag2] -= area * d22
            J.values[self._pos_cross2] = -area * d21
        else:
            J.values[self._pos_cross1] = 0.0
            J.values[self._pos_cross2] = 0.0
        return J

    def assemble_density_residual(self, state_prev, guess, w1, w2, dt=None,
                                  u_faces=None):
        """Residual evaluated at a guess state, as one 2N vector."""
        x = np.concatenate([guess.n1, guess.n2])
        return self.density_residual(x, state_prev.n1, state_prev.n2,
                                     w1, w2, dt or self.cfg.dt, u_faces)

    # -- time stepping -----------------------------------------------------

    def step(self, state, dt=None, u_faces=None):
        """One implicit step; returns (new_state, stats).

        Raises :class:`StepError` when Newton does not converge; the caller
        decides whether to retry with a smaller dt.
        """
        dt = self.cfg.dt if dt is None else dt
        w1, w2, chem_stats = self.solve_chemicals(state.n1, state.n2, u_faces)
        n1_prev = state.n1
        n2_prev = state.n2

        def F(x):
            return self.density_residual(x, n1_prev, n2_prev, w1, w2, dt, u_faces)

        def Jac(x):
            return self.density_jacobian(x, w1, w2, dt, u_faces)

        x0 = np.concatenate([state.n1, state.n2])
        try:
            x, stats = newton(F, Jac, x0, cfg=self.cfg.newton,
                              krylov=self.cfg.krylov)
        except NewtonError as exc:
            raise StepError("step rejected at t=%.6g: %s" % (state.t, exc),
                            time=state.t) from exc
        if not stats["converged"]:
            raise StepError(
                "step rejected at t=%.6g: Newton stalled at residual %.3e "
                "after %d iterations" % (state.t, stats["residual_history"][-1],
                                         stats["n_iters"]),
                time=state.t, stats=stats)
        N = self.n_cells
        new = MacroState(x[:N].copy(), x[N:].copy(), w1, w2, state.t + dt)
        step_stats = {
            "newton_iters": stats["n_iters"],
            "gmres_iters": sum(s["n_iters"] for s in stats["linear_stats"]),
            "residual": stats["residual_history"][-1],
        }
        step_stats.update(chem_stats)
        return new, step_stats

    def advance(self, state, dt, u_faces=None):
        """Advance by exactly dt, halving the sub-step on rejected steps
        (at most cfg.max_dt_halvings times)."""
        t_end = state.t + dt
        sub_dt = dt
        halvings = 0
        agg = {"newton_iters": 0, "gmres_iters": 0, "chem_gmres_iters": 0,
               "residual": 0.0, "substeps": 0}
        while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
            take = min(sub_dt, t_end - state.t)
            try:
                state, st = self.step(state, dt=take, u_faces=u_faces)
            except StepError as exc:
                halvings += 1
                if halvings > self.cfg.max_dt_halvings:
                    raise StepError(
                        "aborting: step still rejected after %d dt halvings "
                        "at t=%.6g" % (self.cfg.max_dt_halvings, state.t),
                        time=state.t) from exc
                sub_dt *= 0.5
                continue
            agg["newton_iters"] += st["newton_iters"]
            agg["gmres_iters"] += st["gmres_iters"]
            agg["chem_gmres_iters"] += st["chem_gmres_iters"]
            agg["residual"] = st["residual"]
            agg["substeps"] += 1
        state.t = t_end
        return state, agg

    def run(self, state, t_end, snapshot_times=(), u_faces=None,
            on_snapshot=None, on_step=None):
        """Step from state.t to t_end, emitting snapshots at the given times.

        Snapshot times are hit exactly (the step is clipped). Returns the
        final state and the list of per-step diagnostics records.
        """
        state.validate(self.n_cells)
        eps = 1e-12 * max(1.0, abs(t_end))
        targets = sorted({float(s) for s in snapshot_times
                          if state.t + eps < s <= t_end + eps})
        if not targets or targets[-1] < t_end - eps:
            targets.append(t_end)
        snap_set = {float(s) for s in snapshot_times}
        records = []
        for target in targets:
            while state.t < target - eps:
                take = min(self.cfg.dt, target - state.t)
                state, st = self.advance(state, take, u_faces=u_faces)
                rec = self.diagnostics(state)
                rec.update(st)
                records.append(rec)
                if on_step is not None:
                    on_step(rec)
            state.t = target
            if on_snapshot is not None and any(abs(target - s) <= eps
                                               for s in snap_set):
                on_snapshot(state)
        return state, records

    def diagnostics(self, state):
        return diagnostics(state, self.mesh)


def diagnostics(state, msh):
    """Mass, extrema, and L2 norms of both densities; plus the time."""
    area = msh.cell_area
    rec = {"t": state.t}
    for name, arr in (("n1", state.n1), ("n2", state.n2)):
        rec["mass_" + name] = float(area * arr.sum())
        rec["min_" + name] = float(arr.min(initial=np.inf))
        rec["max_" + name] = float(arr.max(initial=-np.inf))
        rec["l2_" + name] = float(np.sqrt(area * (arr * arr).sum()))
    rec["min_w1"] = float(state.w1.min(initial=np.inf))
    rec["max_w1"] = float(state.w1.max(initial=-np.inf))
    rec["min_w2"] = float(state.w2.min(initial=np.inf))
    rec["max_w2"] = float(state.w2.max(initial=-np.inf))
    return rec
