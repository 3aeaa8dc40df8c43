"""Incompressible flow on a staggered (MAC) grid, and the operator-split
coupling with the density stepper.

Velocity components live on cell faces (u on x-faces, v on y-faces),
pressure at cell centres. One fluid step is semi-Lagrangian advection,
an implicit viscosity solve with the buoyant body force -Q(n1,n2)*grad(phi),
and a pressure projection. Channel conventions: parabolic inflow on the
west boundary, zero-gradient outflow on the east, free-slip walls top and
bottom, no-slip on obstacle surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, model
from .linalg import KrylovConfig, SparseMatrix, conjugate_gradient, gmres
from .macro_solver import MacroSolver, StepConfig, StepError


@dataclass
class FluidConfig:
    nu: float = 0.1
    k_conv: float = 1.0
    dt: float = 1e-2
    grad_phi: tuple = (0.0, 0.0)
    inflow_scale: float = 1.0
    poisson_rtol: float = 1e-12
    helmholtz_rtol: float = 1e-12
    poisson_restart: int = 80
    poisson_max_iters: int = 20000

    def __post_init__(self):
        if self.nu < 0.0:
            raise ValueError("nu must be nonnegative")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass
class FluidState:
    u: np.ndarray          # (nx+1, ny) x-face normal velocities
    v: np.ndarray          # (nx, ny+1) y-face normal velocities
    p: np.ndarray          # per-fluid-cell pressure impulse
    t: float = 0.0

    def copy(self):
        return FluidState(self.u.copy(), self.v.copy(), self.p.copy(), self.t)


class FluidSolver:
    """Projection-method stepper bound to one mesh and one FluidConfig."""

    def __init__(self, msh, cfg=None):
        self.mesh = msh
        self.cfg = cfg or FluidConfig()
        spec = msh.spec
        self.nx, self.ny = spec.nx, spec.ny
        self.dx, self.dy = msh.dx, msh.dy
        nx, ny = self.nx, self.ny
        solid = msh.solid
        fluid = ~solid

        uface_solid = np.zeros((nx + 1, ny), dtype=bool)
        uface_solid[1:nx, :] = solid[:-1, :] | solid[1:, :]
        vface_solid = np.zeros((nx, ny + 1), dtype=bool)
        vface_solid[:, 1:ny] = solid[:, :-1] | solid[:, 1:]
        self.uface_solid = uface_solid
        self.vface_solid = vface_solid

        u_unknown = np.zeros((nx + 1, ny), dtype=bool)
        u_unknown[1:nx, :] = fluid[:-1, :] & fluid[1:, :]
        v_unknown = np.zeros((nx, ny + 1), dtype=bool)
        v_unknown[:, 1:ny] = fluid[:, :-1] & fluid[:, 1:]
        self.u_unknown = u_unknown
        self.v_unknown = v_unknown

        # inlet profile on the actual inlet height: u = 2*yh*(1-yh) * scale
        yh = (np.arange(ny) + 0.5) * self.dy / spec.ly
        self.u_inlet = self.cfg.inflow_scale * 2.0 * yh * (1.0 - yh)

        self._build_helmholtz()
        self._build_poisson()
        self._build_sample_points()
        self._uh_warm = None
        self._vh_warm = None
        self._q_warm = None

    def zero_state(self):
        st = FluidState(np.zeros((self.nx + 1, self.ny)),
                        np.zeros((self.nx, self.ny + 1)),
                        np.zeros(self.mesh.n_cells), 0.0)
        return self.apply_bcs(st)

    # -- operators -----------------------------------------------------------

    def _build_helmholtz(self):
        """(I - dt*nu*lap) on each velocity component, boundary conditions
        folded in: inlet Dirichlet to the RHS, outflow links dropped
        (implicit zero gradient), slip walls dropped, no-slip obstacle and
        inlet ghosts eliminated at half-cell distance (2x coefficient)."""
        cfg = self.cfg
        if cfg.nu == 0.0:
            self._Au = self._Av = None
            self._u_fold = self._v_fold = None
            return
        nx, ny = self.nx, self.ny
        ch = cfg.dt * cfg.nu / self.dx ** 2
        cv = cfg.dt * cfg.nu / self.dy ** 2

        uid = np.full((nx + 1, ny), -1, dtype=np.int64)
        ui, uj = np.nonzero(self.u_unknown)
        uid[ui, uj] = np.arange(ui.size)
        rows, cols, vals = [], [], []
        fold = np.zeros(ui.size)
        for r in range(ui.size):
            i, j = ui[r], uj[r]
            diag = 1.0
            # west/east neighbors at distance dx
            if i - 1 == 0:
                diag += ch
                fold[r] += ch * self.u_inlet[j]
            elif uid[i - 1, j] >= 0:
                rows.append(r); cols.append(uid[i - 1, j]); vals.append(-ch)
                diag += ch
            else:                       # solid face, value 0 at distance dx
                diag += ch
            if i + 1 < nx:
                if uid[i + 1, j] >= 0:
                    rows.append(r); cols.append(uid[i + 1, j]); vals.append(-ch)
                    diag += ch
                else:
                    diag += ch
            # i+1 == nx is the outflow face: zero-gradient, link dropped
            # south/north neighbors at distance dy
            for jj in (j - 1, j + 1):
                if jj < 0 or jj >= ny:
                    continue            # slip wall: tangential gradient zero
                if uid[i, jj] >= 0:
                    rows.append(r); cols.append(uid[i, jj]); vals.append(-cv)
                    diag += cv
                else:                   # obstacle wall halfway between faces
                    diag += 2.0 * cv
            rows.append(r); cols.append(r); vals.append(diag)
        self._Au = SparseMatrix.from_coo(rows, cols, vals, ui.size, ui.size)
        self._u_fold = fold
        self._u_rows = (ui, uj)

        vid = np.full((nx, ny + 1), -1, dtype=np.int64)
        vi, vj = np.nonzero(self.v_unknown)
        vid[vi, vj] = np.arange(vi.size)
        rows, cols, vals = [], [], []
        for r in range(vi.size):
            i, j = vi[r], vj[r]
            diag = 1.0
            # west/east
            if i - 1 < 0:
                diag += 2.0 * ch        # inlet line v=0 at half-cell distance
            elif vid[i - 1, j] >= 0:
                rows.append(r); cols.append(vid[i - 1, j]); vals.append(-ch)
                diag += ch
            else:
                diag += 2.0 * ch        # obstacle wall halfway
            if i + 1 < nx:
                if vid[i + 1, j] >= 0:
                    rows.append(r); cols.append(vid[i + 1, j]); vals.append(-ch)
                    diag += ch
                else:
                    diag += 2.0 * ch
            # i+1 == nx: outflow, link dropped
            # south/north: neighbor faces are stored DOFs (walls hold v=0)
            for jj in (j - 1, j + 1):
                if vid[i, jj] >= 0:
                    rows.append(r); cols.append(vid[i, jj]); vals.append(-cv)
                diag += cv
            rows.append(r); cols.append(r); vals.append(diag)
        self._Av = SparseMatrix.from_coo(rows, cols, vals, vi.size, vi.size)
        self._v_rows = (vi, vj)

    def _build_poisson(self):
        """Cell-centred Neumann Laplacian (positive form), one cell pinned."""
        msh = self.mesh
        N = msh.n_cells
        tau4 = np.asarray(msh.transmissibility, dtype=np.float64)
        cells = np.arange(N, dtype=np.int64)
        rows = [cells]
        cols = [cells]
        diag = np.zeros(N)
        nb_rows, nb_cols, nb_vals = [], [], []
        for d in range(4):
            m = msh.neighbor[:, d] >= 0
            diag[m] += tau4[d]
            nb_rows.append(cells[m])
            nb_cols.append(msh.neighbor[m, d].astype(np.int64))
            nb_vals.append(np.full(m.sum(), -tau4[d]))
        rows = np.concatenate(rows + nb_rows)
        cols = np.concatenate(cols + nb_cols)
        vals = np.concatenate([diag] + nb_vals)
        # symmetric singular Neumann operator; solved on the mean-zero subspace
        self._Ap = SparseMatrix.from_coo(rows, cols, vals, N, N)

        # correction stencil: interior fluid-fluid faces only
        ui, uj = np.nonzero(self.u_unknown)
        self._ucorr = (ui, uj,
                       msh.cell_id[ui - 1, uj].astype(np.int64),
                       msh.cell_id[ui, uj].astype(np.int64))
        vi, vj = np.nonzero(self.v_unknown)
        self._vcorr = (vi, vj,
                       msh.cell_id[vi, vj - 1].astype(np.int64),
                       msh.cell_id[vi, vj].astype(np.int64))

    def _build_sample_points(self):
        nx, ny, dx, dy = self.nx, self.ny, self.dx, self.dy
        iu, ju = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
        self._xu = (iu * dx).ravel()
        self._yu = ((ju + 0.5) * dy).ravel()
        iv, jv = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
        self._xv = ((iv + 0.5) * dx).ravel()
        self._yv = (jv * dy).ravel()

    # -- sub-steps -------------------------------------------------------------

    def apply_bcs(self, state):
        """Inlet profile, wall and obstacle zeros, outflow extrapolation,
        and the global mass-balance correction on the outlet faces."""
        u, v = state.u, state.v
        u[self.uface_solid] = 0.0
        v[self.vface_solid] = 0.0
        u[0, :] = self.u_inlet
        v[:, 0] = 0.0
        v[:, self.ny] = 0.0
        u[self.nx, :] = u[self.nx - 1, :]
        influx = u[0, :].sum() * self.dy
        outflux = u[self.nx, :].sum() * self.dy
        u[self.nx, :] += (influx - outflux) / (self.ny * self.dy)
        return state

    def sample_u(self, u, x, y):
        """Bilinear sample of the u-face field at points (x, y)."""
        return _kernels.bilinear_sample(np.ascontiguousarray(u),
                                        x / self.dx, y / self.dy - 0.5)

    def sample_v(self, v, x, y):
        return _kernels.bilinear_sample(np.ascontiguousarray(v),
                                        x / self.dx - 0.5, y / self.dy)

    def advect_velocity(self, state, dt=None):
        """Semi-Lagrangian transport: each face value is replaced by the
        field sampled at x - dt*k_conv*U(x), feet clamped to the domain box."""
        dt = self.cfg.dt if dt is None else dt
        a = dt * self.cfg.k_conv
        if a == 0.0:
            return self.apply_bcs(state)
        u, v = state.u, state.v
        ux = u.ravel()
        vx = self.sample_v(v, self._xu, self._yu)
        foot_x = self._xu - a * ux
        foot_y = self._yu - a * vx
        new_u = self.sample_u(u, foot_x, foot_y).reshape(u.shape)

        uy = self.sample_u(u, self._xv, self._yv)
        vy = v.ravel()
        foot_x = self._xv - a * uy
        foot_y = self._yv - a * vy
        new_v = self.sample_v(v, foot_x, foot_y).reshape(v.shape)
        state.u = new_u
        state.v = new_v
        return self.apply_bcs(state)

    def _face_buoyancy(self, n1, n2):
        """Q(n1, n2) averaged from cell centres onto unknown faces."""
        Q = self.mesh.scatter(model.buoyancy_coefficient(n1, n2)).T
        ui, uj = np.nonzero(self.u_unknown)
        Qu = 0.5 * (Q[ui - 1, uj] + Q[ui, uj])
        vi, vj = np.nonzero(self.v_unknown)
        Qv = 0.5 * (Q[vi, vj - 1] + Q[vi, vj])
        return Qu, Qv

    def diffuse_and_force(self, state, n1, n2, dt=None):
        """Implicit viscosity plus the body force -Q*grad(phi), per component."""
        dt = self.cfg.dt if dt is None else dt
        gx, gy = self.cfg.grad_phi
        Qu, Qv = (None, None)
        if gx != 0.0 or gy != 0.0:
            Qu, Qv = self._face_buoyancy(n1, n2)
        stats = {"helmholtz_iters": 0}
        if self.cfg.nu == 0.0:
            if Qu is not None:
                state.u[self.u_unknown] -= dt * gx * Qu
                state.v[self.v_unknown] -= dt * gy * Qv
            return self.apply_bcs(state), stats
        cfg = KrylovConfig(rtol=self.cfg.helmholtz_rtol, max_iters=5000,
                           restart=40)
        rhs = state.u[self.u_unknown] + self._u_fold
        if Qu is not None:
            rhs -= dt * gx * Qu
        sol, st = gmres(self._Au, rhs, x0=self._uh_warm, cfg=cfg)
        if not st["converged"]:
            raise StepError("velocity diffusion solve (u) did not converge",
                            time=state.t, stats=st)
        self._uh_warm = sol.copy()
        state.u[self.u_unknown] = sol
        stats["helmholtz_iters"] += st["n_iters"]

        rhs = state.v[self.v_unknown]
        if Qv is not None:
            rhs = rhs - dt * gy * Qv
        sol, st = gmres(self._Av, rhs, x0=self._vh_warm, cfg=cfg)
        if not st["converged"]:
            raise StepError("velocity diffusion solve (v) did not converge",
                            time=state.t, stats=st)
        self._vh_warm = sol.copy()
        state.v[self.v_unknown] = sol
        stats["helmholtz_iters"] += st["n_iters"]
        return self.apply_bcs(state), stats

    def divergence(self, state):
        """Discrete divergence per fluid cell."""
        msh = self.mesh
        ix, iy = msh.cell_ix, msh.cell_iy
        return ((state.u[ix + 1, iy] - state.u[ix, iy]) / self.dx
                + (state.v[ix, iy + 1] - state.v[ix, iy]) / self.dy)

    def project(self, state, dt=None):
        """Pressure projection; boundary-normal velocities are left alone
        (their data must already balance, which apply_bcs guarantees)."""
        dt = self.cfg.dt if dt is None else dt
        msh = self.mesh
        div = self.divergence(state)
        area = msh.cell_area
        net = area * div.sum()
        scale = area * np.abs(div).sum() + 1e-300
        if abs(net) > 1e-8 * max(1.0, scale):
            raise ValueError(
                "incompatible boundary data: net boundary flux %.3e "
                "(inflow and outflow must balance before projection)" % net)
        b = -area * div / dt
        # the absolute floor keeps re-projection of an already clean field
        # from chasing rtol*||b|| into the noise; a residual at the floor
        # still leaves max divergence in the 1e-10 range
        cfg = KrylovConfig(rtol=self.cfg.poisson_rtol,
                           max_iters=self.cfg.poisson_max_iters,
                           restart=self.cfg.poisson_restart,
                           atol=1e-10 * area / dt)
        q, st = conjugate_gradient(self._Ap, b, x0=self._q_warm, cfg=cfg,
                                   remove_nullspace=True)
        if not st["converged"]:
            raise StepError("pressure solve did not converge "
                            "(true residual %.3e)" % st["true_residual"],
                            time=state.t, stats=st)
        self._q_warm = q.copy()
        ui, uj, cL, cR = self._ucorr
        state.u[ui, uj] -= dt * (q[cR] - q[cL]) / self.dx
        vi, vj, cS, cN = self._vcorr
        state.v[vi, vj] -= dt * (q[cN] - q[cS]) / self.dy
        state.p = q
        div_after = float(np.abs(self.divergence(state)).max(initial=0.0))
        return state, {"max_div": div_after, "poisson_iters": st["n_iters"],
                       "div_before": float(np.abs(div).max(initial=0.0))}

    def step(self, state, n1, n2, dt=None):
        """advect -> diffuse+force -> project; returns (state, stats)."""
        dt = self.cfg.dt if dt is None else dt
        state = self.advect_velocity(state, dt)
        state, dstats = self.diffuse_and_force(state, n1, n2, dt)
        state, pstats = self.project(state, dt)
        state.t += dt
        pstats.update(dstats)
        return state, pstats

    # -- coupling and monitors ---------------------------------------------

    def macro_face_velocities(self, state):
        """Outward normal velocity per fluid cell and direction (W,E,S,N),
        the advection interface of the density stepper."""
        msh = self.mesh
        ix, iy = msh.cell_ix, msh.cell_iy
        out = np.empty((msh.n_cells, 4))
        out[:, 0] = -state.u[ix, iy]
        out[:, 1] = state.u[ix + 1, iy]
        out[:, 2] = -state.v[ix, iy]
        out[:, 3] = state.v[ix, iy + 1]
        return out

    def kinetic_energy(self, state):
        area = self.dx * self.dy
        return 0.5 * area * (float((state.u ** 2).sum())
                             + float((state.v ** 2).sum()))

    def momentum_y(self, state):
        return self.dx * self.dy * float(state.v.sum())

    def energy_budget(self, state, n1, n2):
        """Upper bound on the power the boundary and body force can feed
        into the flow: advective, viscous and pressure inflow work plus
        the |Q grad(phi)| forcing work."""
        adv = 0.5 * self.dy * float((self.u_inlet ** 3).sum())
        visc = 0.0
        if self.cfg.nu > 0.0:
            du = (self.u_inlet - state.u[1, :]) / self.dx
            visc = self.cfg.nu * self.dy * float(
                np.maximum(self.u_inlet * du, 0.0).sum())
        # net pressure power through inlet and outlet (gauge invariant once
        # the boundary fluxes balance); only a positive net feeds the flow
        cid = self.mesh.cell_id
        q_in = state.p[cid[0, :]]
        q_out = state.p[cid[self.nx - 1, :]]
        press = self.dy * (float((self.u_inlet * q_in).sum())
                           - float((state.u[self.nx, :] * q_out).sum()))
        press = max(0.0, press)
        gx, gy = self.cfg.grad_phi
        force = 0.0
        if gx != 0.0 or gy != 0.0:
            Q = self.mesh.scatter(model.buoyancy_coefficient(n1, n2)).T
            ix, iy = self.mesh.cell_ix, self.mesh.cell_iy
            uc = 0.5 * (state.u[ix, iy] + state.u[ix + 1, iy])
            vc = 0.5 * (state.v[ix, iy] + state.v[ix, iy + 1])
            Qc = Q[ix, iy]
            force = self.dx * self.dy * float(
                (np.abs(Qc) * (abs(gx) * np.abs(uc) + abs(gy) * np.abs(vc))).sum())
        return adv + visc + press + force


class CoupledSolver:
    """Operator-split coupling: fluid step first, then chemicals and
    densities advected by the new velocity field."""

    def __init__(self, msh, params, step_cfg=None, fluid_cfg=None):
        step_cfg = step_cfg or StepConfig(advection="upwind")
        if step_cfg.advection != "upwind":
            raise ValueError("coupled runs require advection='upwind'")
        self.mesh = msh
        self.macro = MacroSolver(msh, params, step_cfg)
        self.fluid = FluidSolver(msh, fluid_cfg)

    def coupled_step(self, fluid_state, macro_state, dt=None):
        dt = self.macro.cfg.dt if dt is None else dt
        fluid_state, fstats = self.fluid.step(fluid_state,
                                              macro_state.n1, macro_state.n2,
                                              dt)
        u_faces = self.fluid.macro_face_velocities(fluid_state)
        macro_state, mstats = self.macro.step(macro_state, dt=dt,
                                              u_faces=u_faces)
        mstats.update(fstats)
        return fluid_state, macro_state, mstats

    def run_coupled(self, fluid_state, macro_state, t_end, snapshot_times=(),
                    on_snapshot=None, on_step=None):
        """Advance both states to t_end with snapshot clipping and dt halving
        on rejected macro steps (the halved attempt redoes the fluid sub-step
        from the saved states, so the splitting order is preserved)."""
        macro_state.validate(self.mesh.n_cells)
        cfg = self.macro.cfg
        eps = 1e-12 * max(1.0, abs(t_end))
        targets = sorted({float(s) for s in snapshot_times
                          if macro_state.t + eps < s <= t_end + eps})
        if not targets or targets[-1] < t_end - eps:
            targets.append(t_end)
        snap_set = {float(s) for s in snapshot_times}
        records = []
        for target in targets:
            while macro_state.t < target - eps:
                dt_req = min(cfg.dt, target - macro_state.t)
                sub_dt = dt_req
                t_goal = macro_state.t + dt_req
                halvings = 0
                agg = None
                while macro_state.t < t_goal - eps:
                    take = min(sub_dt, t_goal - macro_state.t)
                    fs_try = fluid_state.copy()
                    ms_try = macro_state.copy()
                    try:
                        fs_try, ms_try, st = self.coupled_step(fs_try, ms_try,
                                                               take)
                    except StepError:
                        halvings += 1
                        if halvings > cfg.max_dt_halvings:
                            raise
                        sub_dt *= 0.5
                        continue
                    fluid_state, macro_state = fs_try, ms_try
                    if agg is None:
                        agg = dict(st)
                    else:
                        for k, vv in st.items():
                            if isinstance(vv, (int, float)):
                                agg[k] = agg.get(k, 0) + vv
                        agg["max_div"] = st["max_div"]
                macro_state.t = t_goal
                fluid_state.t = t_goal
                rec = self.macro.diagnostics(macro_state)
                rec.update(agg or {})
                rec["kinetic_energy"] = self.fluid.kinetic_energy(fluid_state)
                rec["momentum_y"] = self.fluid.momentum_y(fluid_state)
                rec["energy_budget"] = self.fluid.energy_budget(
                    fluid_state, macro_state.n1, macro_state.n2)
                records.append(rec)
                if on_step is not None:
                    on_step(rec)
            macro_state.t = target
            fluid_state.t = target
            if on_snapshot is not None and any(abs(target - s) <= eps
                                               for s in snap_set):
                on_snapshot(fluid_state, macro_state)
        return fluid_state, macro_state, records
