"""Conservation, positivity, symmetry, and fixed-point behavior of the
implicit density stepper, plus convergence of the elliptic chemical solve."""

import numpy as np
import pytest

from chemoflow.linalg import NewtonConfig
from chemoflow.macro_solver import (MacroSolver, MacroState, StepConfig,
                                    StepError)
from chemoflow.mesh import GridSpec, build_grid
from chemoflow.model import ModelParams, stationary_state

EX1 = dict(a1=10.0, b1=2.0, c1=0.4, a2=0.1, b2=2.0, c2=0.01,
           beta1=20.0, beta2=100.0, kappa1=2.0, kappa2=-0.8)
EX3 = dict(a1=0.61, b1=0.4575, c1=9.5, a2=0.52, b2=0.31, c2=8.2,
           beta1=1.0, beta2=1.0, kappa1=2.0, kappa2=-0.8,
           f2_coupling_sign=-1)


def box(n=16):
    return build_grid(GridSpec(nx=n, ny=n, lx=1.0, ly=1.0))


def pocket_state(msh, centers, amplitude=5.0, radius=0.12):
    """Gaussian bumps, alternating species."""
    x, y = msh.cell_x, msh.cell_y
    n1 = np.zeros(msh.n_cells)
    n2 = np.zeros(msh.n_cells)
    for k, (cx, cy) in enumerate(centers):
        bump = amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2)
                                  / (2.0 * radius ** 2))
        (n1 if k % 2 == 0 else n2)[:] += bump
    z = np.zeros(msh.n_cells)
    return MacroState(n1, n2, z.copy(), z.copy(), 0.0)


FOUR_POCKETS = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]


class TestChemicalSolve:
    def test_constant_source_gives_exact_constant(self):
        msh = box()
        p = ModelParams(1.0, 1.0, 0.5, 1.0, 1.0, 0.5, alpha1=4.0)
        solver = MacroSolver(msh, p)
        w, _ = solver.solve_chemical_field(np.full(msh.n_cells, 3.0), alpha=4.0)
        assert np.allclose(w, 0.75, atol=1e-9)

    def test_manufactured_solution_second_order(self):
        # -lap(w) + w = (2 pi^2 + 1) cos(pi x) cos(pi y), compatible with
        # the homogeneous Neumann boundary
        errors = []
        for n in (16, 32):
            msh = box(n)
            p = ModelParams(1.0, 1.0, 0.5, 1.0, 1.0, 0.5)
            solver = MacroSolver(msh, p)
            x, y = msh.cell_x, msh.cell_y
            exact = np.cos(np.pi * x) * np.cos(np.pi * y)
            src = (2.0 * np.pi ** 2 + 1.0) * exact
            w, _ = solver.solve_chemical_field(src, alpha=1.0)
            err = np.sqrt(msh.cell_area * ((w - exact) ** 2).sum())
            errors.append(err)
        order = np.log2(errors[0] / errors[1])
        assert order > 1.7

    def test_literal_sign_flag_flips_the_laplacian(self):
        msh = box(8)
        p = ModelParams(1.0, 1.0, 0.5, 1.0, 1.0, 0.5)
        fixed = MacroSolver(msh, p).chemical_matrix(alpha=2.0)
        literal = MacroSolver(msh, p, StepConfig(chemical_sign_literal=True)
                              ).chemical_matrix(alpha=2.0)
        # the two operators sum to 2*alpha*|K| on the diagonal, zero off it
        both = fixed.values + literal.values
        dense = np.zeros((msh.n_cells, msh.n_cells))
        for i in range(msh.n_cells):
            lo, hi = fixed.row_offsets[i], fixed.row_offsets[i + 1]
            dense[i, fixed.column_indices[lo:hi]] = both[lo:hi]
        assert np.allclose(dense, 2.0 * 2.0 * msh.cell_area * np.eye(msh.n_cells))


class TestConservation:
    def test_mass_conserved_without_reaction(self):
        # chemotactic fluxes telescope just like diffusive ones
        msh = box()
        p = ModelParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, **{
            k: v for k, v in EX1.items() if k.startswith(("beta", "kappa"))})
        cfg = StepConfig(dt=1e-3, newton=NewtonConfig(abs_tol=1e-12))
        solver = MacroSolver(msh, p, cfg)
        rng = np.random.default_rng(7)
        state = MacroState(rng.uniform(0.5, 1.5, msh.n_cells),
                           rng.uniform(0.5, 1.5, msh.n_cells),
                           np.zeros(msh.n_cells), np.zeros(msh.n_cells), 0.0)
        mass1 = msh.cell_area * state.n1.sum()
        mass2 = msh.cell_area * state.n2.sum()
        for _ in range(20):
            state, _ = solver.step(state)
            m1 = msh.cell_area * state.n1.sum()
            m2 = msh.cell_area * state.n2.sum()
            assert abs(m1 - mass1) <= 1e-10 * mass1
            assert abs(m2 - mass2) <= 1e-10 * mass2
            mass1, mass2 = m1, m2

    def test_mass_inequality_competitive_sign(self):
        msh = box()
        p = ModelParams(**EX3)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        rng = np.random.default_rng(11)
        state = MacroState(rng.uniform(0.0, 1.0, msh.n_cells),
                           rng.uniform(0.0, 1.0, msh.n_cells),
                           np.zeros(msh.n_cells), np.zeros(msh.n_cells), 0.0)
        growth = (1.0 + max(p.a1, p.a2) * 1e-3) * 1.05
        prev = solver.diagnostics(state)
        for _ in range(15):
            state, _ = solver.step(state)
            rec = solver.diagnostics(state)
            assert rec["mass_n1"] <= growth * prev["mass_n1"]
            assert rec["mass_n2"] <= growth * prev["mass_n2"]
            prev = rec

    def test_upwind_advection_drains_mass_through_outflow(self):
        msh = box()
        p = ModelParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3, advection="upwind"))
        # uniform rightward flow: +1 through east faces, -1 outward at west
        from chemoflow.mesh import EAST, WEST
        u_faces = np.zeros((msh.n_cells, 4))
        u_faces[:, EAST] = 1.0
        u_faces[:, WEST] = -1.0
        rng = np.random.default_rng(3)
        state = MacroState(rng.uniform(0.5, 1.5, msh.n_cells),
                           rng.uniform(0.5, 1.5, msh.n_cells),
                           np.zeros(msh.n_cells), np.zeros(msh.n_cells), 0.0)
        mass = msh.cell_area * state.n1.sum()
        for _ in range(10):
            state, _ = solver.step(state, u_faces=u_faces)
            m = msh.cell_area * state.n1.sum()
            assert m < mass
            assert state.n1.min() >= -1e-12
            mass = m


class TestFixedPointsAndPositivity:
    def test_uniform_stationary_state_is_fixed(self):
        p = ModelParams(**{**EX3, "kappa1": 0.0, "kappa2": 0.0})
        n1s, n2s = stationary_state(p)
        msh = box()
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = MacroState.uniform(msh.n_cells, n1s, n2s)
        for _ in range(20):
            state, _ = solver.step(state)
        assert np.abs(state.n1 - n1s).max() <= 1e-10
        assert np.abs(state.n2 - n2s).max() <= 1e-10

    def test_flat_fields_persist_with_chemotaxis_on(self):
        # uniform densities give uniform chemicals, so the chemotactic
        # gradient vanishes identically
        p = ModelParams(**EX3)
        n1s, n2s = stationary_state(p)
        msh = box()
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = MacroState.uniform(msh.n_cells, n1s, n2s)
        for _ in range(10):
            state, _ = solver.step(state)
        assert np.ptp(state.n1) <= 1e-10
        assert np.ptp(state.n2) <= 1e-10

    def test_pocket_run_stays_nonnegative(self):
        msh = box(32)
        p = ModelParams(**EX1)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = pocket_state(msh, FOUR_POCKETS)
        for _ in range(30):
            state, _ = solver.step(state)
            assert state.n1.min() >= -1e-8
            assert state.n2.min() >= -1e-8

    def test_newton_quality_on_pocket_state(self):
        msh = box()
        p = ModelParams(**EX1)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = pocket_state(msh, FOUR_POCKETS)
        for _ in range(5):
            state, st = solver.step(state)
            assert st["newton_iters"] <= 10
            assert st["residual"] <= 1e-10


class TestSymmetry:
    def test_step_commutes_with_quarter_rotation(self):
        msh = box()
        p = ModelParams(**EX1)

        def rotate(field):
            return msh.gather(np.rot90(msh.scatter(field)))

        def one_step(n1, n2):
            solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
            out, _ = solver.step(MacroState(n1, n2, np.zeros(msh.n_cells),
                                            np.zeros(msh.n_cells), 0.0))
            return out

        rng = np.random.default_rng(19)
        n1 = rng.uniform(0.1, 2.0, msh.n_cells)
        n2 = rng.uniform(0.1, 2.0, msh.n_cells)
        direct = one_step(rotate(n1), rotate(n2))
        swapped = one_step(n1, n2)
        assert np.abs(direct.n1 - rotate(swapped.n1)).max() <= 1e-10
        assert np.abs(direct.n2 - rotate(swapped.n2)).max() <= 1e-10


class TestStepModes:
    def test_explicit_reaction_mode_differs_by_order_dt(self):
        msh = box(8)
        p = ModelParams(**EX1)
        state = pocket_state(msh, [(0.5, 0.5)], amplitude=1.0)
        out = {}
        for implicit in (True, False):
            solver = MacroSolver(msh, p, StepConfig(dt=1e-3,
                                                    implicit_reaction=implicit))
            out[implicit], _ = solver.step(state.copy())
        gap = np.abs(out[True].n1 - out[False].n1).max()
        assert 0.0 < gap < 1e-3

    def test_advance_halves_then_gives_up(self):
        msh = box(8)
        p = ModelParams(**EX1)
        cfg = StepConfig(dt=1e-3, newton=NewtonConfig(max_iters=1),
                         max_dt_halvings=2)
        solver = MacroSolver(msh, p, cfg)
        state = pocket_state(msh, FOUR_POCKETS)
        with pytest.raises(StepError, match="halvings"):
            solver.advance(state, 1e-3)

    def test_advance_aggregates_substeps(self):
        msh = box(8)
        p = ModelParams(**EX1)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = pocket_state(msh, [(0.5, 0.5)], amplitude=1.0)
        state, agg = solver.advance(state, 1e-3)
        assert agg["substeps"] == 1
        assert state.t == pytest.approx(1e-3)
        assert agg["newton_iters"] >= 1
        assert agg["chem_gmres_iters"] >= 1

    def test_run_hits_snapshot_times_exactly(self):
        msh = box(8)
        p = ModelParams(**EX1)
        solver = MacroSolver(msh, p, StepConfig(dt=1e-3))
        state = pocket_state(msh, [(0.5, 0.5)], amplitude=1.0)
        seen = []
        final, records = solver.run(state, t_end=0.01,
                                    snapshot_times=[0.0035, 0.007],
                                    on_snapshot=lambda s: seen.append(s.t))
        assert seen == [0.0035, 0.007]
        assert final.t == pytest.approx(0.01)
        assert len(records) == 11       # two clipped steps re-align the grid
        for key in ("t", "mass_n1", "l2_n2", "newton_iters", "chem_gmres_iters"):
            assert key in records[0]


class TestDiagnosticsAndValidation:
    def test_diagnostics_against_brute_force(self):
        msh = box(8)
        rng = np.random.default_rng(23)
        state = MacroState(rng.uniform(0, 1, msh.n_cells),
                           rng.uniform(0, 1, msh.n_cells),
                           rng.uniform(0, 1, msh.n_cells),
                           rng.uniform(0, 1, msh.n_cells), 0.5)
        from chemoflow.macro_solver import diagnostics
        rec = diagnostics(state, msh)
        assert rec["t"] == 0.5
        assert rec["mass_n1"] == pytest.approx(
            sum(msh.cell_area * v for v in state.n1), rel=1e-13)
        assert rec["l2_n2"] == pytest.approx(
            np.sqrt(msh.cell_area) * np.linalg.norm(state.n2), rel=1e-13)
        assert rec["max_w1"] == state.w1.max()

    def test_unit_state_has_unit_mass(self):
        msh = box(8)
        rec = MacroSolver(msh, ModelParams(1, 1, 1, 1, 1, 1)).diagnostics(
            MacroState.uniform(msh.n_cells, 1.0, 0.0))
        assert rec["mass_n1"] == pytest.approx(1.0, rel=1e-13)
        assert rec["mass_n2"] == 0.0

    def test_state_validation(self):
        state = MacroState.uniform(64, 1.0, 1.0)
        with pytest.raises(ValueError, match="entries"):
            state.validate(65)
        state.n2[3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            state.validate(64)

    def test_step_config_validation(self):
        with pytest.raises(ValueError):
            StepConfig(dt=0.0)
        with pytest.raises(ValueError):
            StepConfig(advection="eno")
