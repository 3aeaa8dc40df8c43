"""Command line front end: run simulations, kinetic studies, sanity checks.

Exit codes: 0 on success, 1 when a solver fails at runtime, 2 for
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .. import __version__, _kernels
from ..fluid_solver import CoupledSolver
from ..kinetic import (KineticParams, cfl_limit, convergence_study,
                       micro_macro_step, study_initial_state)
from ..linalg import NewtonError
from ..macro_solver import MacroSolver, StepError
from . import config as config_mod
from . import presets
from .config import ConfigError
from .snapshots import (SnapshotRecord, write_diagnostics, write_metadata,
                        write_snapshot)

_FIELD_NAMES = ("n1", "n2", "w1", "w2", "speed", "pressure")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="chemoflow",
        description="Implicit finite-volume solvers for chemotactic "
                    "predator-prey dynamics, with optional flow coupling "
                    "and a kinetic validation mode.")
    parser.add_argument("--version", action="version",
                        version="chemoflow %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--preset", help="named preset (%s)"
                       % ", ".join(presets.preset_names()))
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed override")
        p.add_argument("--threads", type=int, default=1,
                       help="kernel thread count (default 1)")

    run = sub.add_parser("run", help="advance a configured simulation and "
                                     "write snapshots plus diagnostics")
    add_common(run)
    run.add_argument("--t-end", type=float, help="final time override")
    run.add_argument("--dt", type=float, help="time step override")
    run.add_argument("--nx", type=int, help="grid cells in x override")
    run.add_argument("--ny", type=int, help="grid cells in y override")
    run.add_argument("--format", choices=("csv", "pgm"),
                     help="snapshot format override")

    study = sub.add_parser("kinetic-study",
                           help="kinetic vs diffusion-limit convergence "
                                "study over a list of scaling parameters")
    add_common(study)
    study.add_argument("--t-end", type=float, help="final time override")
    study.add_argument("--dt", type=float, help="time step override")

    check = sub.add_parser("check", help="run quick invariant checks "
                                         "against the built-in presets")
    check.add_argument("--preset", help="check a single preset only")
    check.add_argument("--threads", type=int, default=1)
    return parser


def _load_run_config(args, default_preset=None):
    if args.config and args.preset:
        raise ConfigError("--preset and --config are mutually exclusive")
    if args.config:
        cfg = config_mod.load_config(args.config)
    elif args.preset:
        cfg = config_mod.preset_config(args.preset)
    elif default_preset:
        cfg = config_mod.preset_config(default_preset)
    else:
        raise ConfigError("one of --preset or --config is required")

    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg.seed = args.seed
    if args.out_dir:
        cfg.out_dir = args.out_dir

    t_end = getattr(args, "t_end", None)
    dt = getattr(args, "dt", None)
    if args.command == "kinetic-study":
        if cfg.kinetic is None:
            raise ConfigError("kinetic-study needs a [kinetic] section")
        if t_end is not None:
            cfg.kinetic["t_end"] = t_end
        if dt is not None:
            cfg.kinetic["dt"] = dt
        return cfg

    if cfg.step is not None:
        if t_end is not None:
            cfg.step["t_end"] = t_end
        if dt is not None:
            cfg.step["dt"] = dt
    if cfg.grid is not None:
        if getattr(args, "nx", None) is not None:
            cfg.grid["nx"] = args.nx
        if getattr(args, "ny", None) is not None:
            cfg.grid["ny"] = args.ny
    if getattr(args, "format", None):
        if cfg.output is None:
            cfg.output = config_mod.default_section("output")
        cfg.output["format"] = args.format
    return cfg


def _cell_center_speed(fluid_state, msh):
    ix = msh.cell_ix
    iy = msh.cell_iy
    uc = 0.5 * (fluid_state.u[ix, iy] + fluid_state.u[ix + 1, iy])
    vc = 0.5 * (fluid_state.v[ix, iy] + fluid_state.v[ix, iy + 1])
    return np.hypot(uc, vc)


def _field_cells(name, macro_state, fluid_state, msh):
    if name in ("n1", "n2", "w1", "w2"):
        return getattr(macro_state, name)
    if name == "pressure":
        if fluid_state is None:
            raise ConfigError("field 'pressure' needs fluid.enabled")
        return fluid_state.p
    if name == "speed":
        if fluid_state is None:
            raise ConfigError("field 'speed' needs fluid.enabled")
        return _cell_center_speed(fluid_state, msh)
    raise ConfigError("unknown output field %r (known: %s)"
                      % (name, ", ".join(_FIELD_NAMES)))


def cmd_run(args):
    cfg = _load_run_config(args)
    if cfg.grid is None or cfg.model is None or cfg.step is None:
        raise ConfigError("run needs [grid], [model] and [step] sections "
                          "(preset %r does not define them)" % cfg.preset)
    _kernels.set_num_threads(args.threads)
    os.makedirs(cfg.out_dir, exist_ok=True)

    msh = config_mod.build_mesh(cfg)
    params = config_mod.build_model_params(cfg)
    step_cfg = config_mod.build_step_config(cfg)
    macro_state = config_mod.build_initial_state(cfg, msh, params)
    times = config_mod.snapshot_times(cfg)
    output = cfg.output if cfg.output is not None \
        else config_mod.default_section("output")
    fmt = output["format"]
    fields = list(output["fields"])
    for name in fields:
        if name not in _FIELD_NAMES:
            raise ConfigError("unknown output field %r (known: %s)"
                              % (name, ", ".join(_FIELD_NAMES)))

    fluid_on = cfg.fluid is not None and cfg.fluid["enabled"]
    written = []

    def emit(macro, fluid=None):
        for name in fields:
            cells = _field_cells(name, macro, fluid, msh)
            rec = SnapshotRecord(time=macro.t, field=name,
                                 nx=msh.spec.nx, ny=msh.spec.ny,
                                 values=msh.scatter(cells).ravel())
            written.append(write_snapshot(rec, fmt, cfg.out_dir))

    if fluid_on:
        fluid_cfg = config_mod.build_fluid_config(cfg)
        solver = CoupledSolver(msh, params, step_cfg=step_cfg,
                               fluid_cfg=fluid_cfg)
        fluid_state = solver.fluid.zero_state()
        solver.fluid.apply_bcs(fluid_state)

        def on_snapshot(fs, ms):
            emit(ms, fs)

        _, _, records = solver.run_coupled(
            fluid_state, macro_state, cfg.step["t_end"],
            snapshot_times=times, on_snapshot=on_snapshot)
    else:
        solver = MacroSolver(msh, params, cfg=step_cfg)

        def on_snapshot(ms):
            emit(ms)

        _, records = solver.run(macro_state, cfg.step["t_end"],
                                snapshot_times=times,
                                on_snapshot=on_snapshot)

    write_diagnostics(cfg.out_dir, records)
    write_metadata(cfg.out_dir, cfg.resolved(), cfg.seed,
                   extra={"snapshots": [os.path.basename(p)
                                        for p in written]})
    print("wrote %d snapshots and %d diagnostic rows to %s"
          % (len(written), len(records), cfg.out_dir))
    return 0


def cmd_kinetic_study(args):
    cfg = _load_run_config(args, default_preset="kinetic")
    _kernels.set_num_threads(args.threads)
    os.makedirs(cfg.out_dir, exist_ok=True)
    study, eps_list = config_mod.build_study_config(cfg)
    rows = convergence_study(eps_list, study)

    path = os.path.join(cfg.out_dir, "kinetic_study.csv")
    with open(path, "w") as fh:
        fh.write("eps,error,ratio\n")
        for row in rows:
            ratio = "" if row["ratio"] is None else "%.17g" % row["ratio"]
            fh.write("%.17g,%.17g,%s\n" % (row["eps"], row["error"], ratio))
    write_metadata(cfg.out_dir, cfg.resolved(), cfg.seed)

    for row in rows:
        ratio = "-" if row["ratio"] is None else "%.3f" % row["ratio"]
        print("eps=%-8g error=%.6e ratio=%s" % (row["eps"], row["error"],
                                                ratio))
    print("wrote %s" % path)
    return 0


def _check_box(name):
    cfg = config_mod.preset_config(name)
    cfg.step["t_end"] = 5 * cfg.step["dt"]
    msh = config_mod.build_mesh(cfg)
    params = config_mod.build_model_params(cfg)
    solver = MacroSolver(msh, params, cfg=config_mod.build_step_config(cfg))
    state = config_mod.build_initial_state(cfg, msh, params)
    mass0 = msh.cell_area * (state.n1.sum() + state.n2.sum())
    state, records = solver.run(state, cfg.step["t_end"])
    checks = [
        ("densities stay non-negative",
         min(r["min_n1"] for r in records) >= -1e-8
         and min(r["min_n2"] for r in records) >= -1e-8),
        ("implicit solves converged",
         all(r["residual"] <= 1e-10 for r in records)),
        ("total mass stays finite and positive",
         0.0 < records[-1]["mass_n1"] + records[-1]["mass_n2"]
         < max(10.0, 100.0 * max(mass0, 1e-30))),
    ]
    return checks


def _check_fluid(name):
    cfg = config_mod.preset_config(name)
    cfg.step["t_end"] = 3 * cfg.step["dt"]
    msh = config_mod.build_mesh(cfg)
    params = config_mod.build_model_params(cfg)
    solver = CoupledSolver(msh, params,
                           step_cfg=config_mod.build_step_config(cfg),
                           fluid_cfg=config_mod.build_fluid_config(cfg))
    macro_state = config_mod.build_initial_state(cfg, msh, params)
    fluid_state = solver.fluid.zero_state()
    solver.fluid.apply_bcs(fluid_state)
    ke0 = solver.fluid.kinetic_energy(fluid_state)
    fluid_state, macro_state, records = solver.run_coupled(
        fluid_state, macro_state, cfg.step["t_end"])
    u_solid = np.abs(fluid_state.u[solver.fluid.uface_solid])
    v_solid = np.abs(fluid_state.v[solver.fluid.vface_solid])
    dt = cfg.step["dt"]
    ke = [ke0] + [r["kinetic_energy"] for r in records]
    budget_ok = all(
        ke[i] - ke[i - 1] <= 1.1 * dt * records[i - 1]["energy_budget"] + 1e-12
        for i in range(1, len(ke)))
    checks = [
        ("discrete divergence stays at solver tolerance",
         max(r["max_div"] for r in records) <= 1e-8),
        ("velocity vanishes on obstacle faces",
         (u_solid.max(initial=0.0) == 0.0
          and v_solid.max(initial=0.0) == 0.0)),
        ("kinetic energy respects the work bound", budget_ok),
    ]
    return checks


def _check_kinetic():
    from ..kinetic import StudyConfig
    cfg = StudyConfig(nx=64, t_end=0.0, dt=1e-5)
    p = KineticParams(sigma1=cfg.sigma, sigma2=cfg.sigma, r=cfg.r, eps=0.2)
    mp = cfg.model_params()
    dx = cfg.lx / cfg.nx
    state = study_initial_state(cfg, p.eps)
    mass0 = dx * (state.n1.sum() + state.n2.sum())
    for _ in range(20):
        state = micro_macro_step(state, p, mp, dx, cfg.dt)
    mass1 = dx * (state.n1.sum() + state.n2.sum())
    w = np.full(2, 0.5)
    g1_mean = np.abs((w[:, None] * state.g1).sum(axis=0)).max()
    g2_mean = np.abs((w[:, None] * state.g2).sum(axis=0)).max()
    try:
        micro_macro_step(state, p, mp, dx, 10.0 * cfl_limit(p, dx))
        cfl_raises = False
    except ValueError:
        cfl_raises = True
    checks = [
        ("kinetic mass is conserved",
         abs(mass1 - mass0) <= 1e-12 * max(1.0, abs(mass0))),
        ("fluctuations stay mean-free",
         max(g1_mean, g2_mean) <= 1e-13),
        ("oversized kinetic steps are rejected", cfl_raises),
    ]
    return checks


def cmd_check(args):
    _kernels.set_num_threads(args.threads)
    plan = []
    if args.preset:
        if args.preset not in presets.preset_names():
            raise ConfigError("unknown preset %r" % args.preset)
        plan.append(args.preset)
    else:
        plan = ["example1", "test1", "kinetic"]

    n_failed = 0
    for name in plan:
        if name == "kinetic":
            checks = _check_kinetic()
        elif name in ("test1", "test2"):
            checks = _check_fluid(name)
        else:
            checks = _check_box(name)
        for label, ok in checks:
            print("%s  %s: %s" % ("PASS" if ok else "FAIL", name, label))
            n_failed += 0 if ok else 1
    if n_failed:
        print("%d check(s) failed" % n_failed)
        return 1
    print("all checks passed")
    return 0


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "kinetic-study":
            return cmd_kinetic_study(args)
        if args.command == "check":
            return cmd_check(args)
        raise AssertionError("unhandled command %r" % args.command)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (StepError, NewtonError) as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
