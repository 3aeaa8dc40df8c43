"""Run configuration: TOML loading, validation, and object builders.

A config names a preset, or spells out sections explicitly, or both; when
both appear each explicit section replaces the preset's section wholesale
(no per-key merging), so every section comes from exactly one source.
Unknown sections or keys are rejected by name.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .. import model as model_mod
from ..fluid_solver import FluidConfig
from ..macro_solver import MacroState, StepConfig
from ..mesh import GridSpec, RectObstacle, build_grid
from ..model import ModelParams
from . import presets, rng


class ConfigError(ValueError):
    pass


# schema: section -> key -> (type spec, default); None default = no entry
_SCHEMA = {
    "grid": {
        "nx": (int, 64), "ny": (int, 64),
        "lx": (float, 1.0), "ly": (float, 1.0),
        "obstacles": (list, []),
    },
    "model": {
        "a1": (float, 0.0), "b1": (float, 0.0), "c1": (float, 0.0),
        "a2": (float, 0.0), "b2": (float, 0.0), "c2": (float, 0.0),
        "d1": (float, 1.0), "d2": (float, 1.0),
        "alpha1": (float, 1.0), "alpha2": (float, 1.0),
        "beta1": (float, 1.0), "beta2": (float, 1.0),
        "kappa1": (float, 0.0), "kappa2": (float, 0.0),
        "chemo_law": (str, "linear"),
        "f2_coupling_sign": (int, 1),
    },
    "step": {
        "dt": (float, 1e-3), "t_end": (float, 0.1),
        "advection": (str, "off"),
        "implicit_reaction": (bool, True),
        "max_dt_halvings": (int, 4),
    },
    "fluid": {
        "enabled": (bool, False),
        "nu": (float, 0.1), "k_conv": (float, 1.0),
        "grad_phi": (list, [0.0, 0.0]),
        "inflow_scale": (float, 1.0),
    },
    "kinetic": {
        "nx": (int, 200), "lx": (float, 1.0),
        "t_end": (float, 0.06), "dt": (float, 2e-5),
        "sigma": (float, 4.0), "r": (float, 1.0),
        "eps_list": (list, [0.4, 0.2, 0.1]),
    },
    "init": {
        "kind": (str, "constant"),
        "pockets": (list, []),
        "amplitude": (float, 1e-3),
        "n1": (float, 0.0), "n2": (float, 0.0),
    },
    "output": {
        "format": (str, "csv"),
        "snapshot_times": (list, []),
        "fields": (list, ["n1", "n2", "w1", "w2"]),
    },
}

_TOP_KEYS = {"preset", "seed", "out_dir", "snapshot_interval"}


@dataclass
class RunConfig:
    preset: str = None
    seed: int = 0
    out_dir: str = "out"
    snapshot_interval: float = None
    grid: dict = None
    model: dict = None
    step: dict = None
    fluid: dict = None
    kinetic: dict = None
    init: dict = None
    output: dict = None

    def resolved(self):
        """Full nested dict (for metadata files)."""
        out = {"seed": int(self.seed), "out_dir": self.out_dir}
        if self.preset:
            out["preset"] = self.preset
        if self.snapshot_interval is not None:
            out["snapshot_interval"] = self.snapshot_interval
        for name in _SCHEMA:
            section = getattr(self, name)
            if section is not None:
                out[name] = copy.deepcopy(section)
        return out


def _coerce(section, key, spec, value):
    want, _ = spec
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("%s.%s must be a number" % (section, key))
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("%s.%s must be an integer" % (section, key))
        return int(value)
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError("%s.%s must be a boolean" % (section, key))
        return value
    if want is str:
        if not isinstance(value, str):
            raise ConfigError("%s.%s must be a string" % (section, key))
        return value
    if want is list:
        if not isinstance(value, list):
            raise ConfigError("%s.%s must be an array" % (section, key))
        return copy.deepcopy(value)
    raise AssertionError("bad schema entry")


def _validate_section(name, data):
    schema = _SCHEMA[name]
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise ConfigError("unknown key %s.%s" % (name, key))
        out[key] = _coerce(name, key, schema[key], value)
    for key, (_, default) in schema.items():
        out.setdefault(key, copy.deepcopy(default))
    return out


def make_config(raw):
    """Validate a raw nested dict (file content or preset) into a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    unknown = set(raw) - _TOP_KEYS - set(_SCHEMA)
    if unknown:
        raise ConfigError("unknown key %s" % sorted(unknown)[0])

    sections = {}
    preset_name = raw.get("preset")
    if preset_name is not None:
        if not isinstance(preset_name, str):
            raise ConfigError("preset must be a string")
        try:
            table = presets.get_preset(preset_name)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        for name in _SCHEMA:
            if name in table:
                sections[name] = _validate_section(name, table[name])
        seed = table.get("seed", 0)
    else:
        seed = 0

    # explicit sections replace preset sections wholesale
    for name in _SCHEMA:
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError("section [%s] must be a table" % name)
            sections[name] = _validate_section(name, raw[name])

    if "seed" in raw:
        if isinstance(raw["seed"], bool) or not isinstance(raw["seed"], int):
            raise ConfigError("seed must be an integer")
        seed = raw["seed"]
    if seed < 0 or seed > 0xFFFFFFFFFFFFFFFF:
        raise ConfigError("seed must fit in 64 bits")

    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string")
    interval = raw.get("snapshot_interval")
    if interval is not None:
        if isinstance(interval, bool) or not isinstance(interval, (int, float)) \
                or interval <= 0:
            raise ConfigError("snapshot_interval must be a positive number")
        interval = float(interval)

    if preset_name is None and "kinetic" not in sections:
        for required in ("grid", "model", "step", "init"):
            if required not in sections:
                raise ConfigError("missing section [%s] (no preset named)"
                                  % required)

    return RunConfig(preset=preset_name, seed=int(seed), out_dir=out_dir,
                     snapshot_interval=interval,
                     **{name: sections.get(name) for name in _SCHEMA})


def load_config(path):
    """Parse and validate a TOML config file."""
    if not os.path.exists(path):
        raise ConfigError("config file not found: %s" % path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("parse error in %s: %s" % (path, exc)) from None
    return make_config(raw)


def preset_config(name):
    return make_config({"preset": name})


def default_section(name):
    """A section filled with schema defaults (for configs that omit it)."""
    return _validate_section(name, {})


# -- builders ----------------------------------------------------------------

def build_mesh(cfg):
    g = cfg.grid
    obstacles = []
    for k, entry in enumerate(g["obstacles"]):
        if not (isinstance(entry, list) and len(entry) == 4):
            raise ConfigError(
                "grid.obstacles[%d] must be [x0, x1, y0, y1]" % k)
        obstacles.append(RectObstacle(*(float(v) for v in entry)))
    spec = GridSpec(nx=g["nx"], ny=g["ny"], lx=g["lx"], ly=g["ly"],
                    obstacles=tuple(obstacles))
    return build_grid(spec)


def build_model_params(cfg):
    m = cfg.model
    try:
        return ModelParams(
            m["a1"], m["b1"], m["c1"], m["a2"], m["b2"], m["c2"],
            d1=m["d1"], d2=m["d2"], alpha1=m["alpha1"], alpha2=m["alpha2"],
            beta1=m["beta1"], beta2=m["beta2"],
            kappa1=m["kappa1"], kappa2=m["kappa2"],
            chemo_law=m["chemo_law"],
            f2_coupling_sign=m["f2_coupling_sign"])
    except ValueError as exc:
        raise ConfigError("model: %s" % exc) from None


def build_step_config(cfg):
    s = cfg.step
    try:
        return StepConfig(dt=s["dt"], advection=s["advection"],
                          implicit_reaction=s["implicit_reaction"],
                          max_dt_halvings=s["max_dt_halvings"])
    except ValueError as exc:
        raise ConfigError("step: %s" % exc) from None


def build_fluid_config(cfg):
    f = cfg.fluid
    gp = f["grad_phi"]
    if not (isinstance(gp, list) and len(gp) == 2):
        raise ConfigError("fluid.grad_phi must be [gx, gy]")
    try:
        return FluidConfig(nu=f["nu"], k_conv=f["k_conv"],
                           dt=cfg.step["dt"],
                           grad_phi=(float(gp[0]), float(gp[1])),
                           inflow_scale=f["inflow_scale"])
    except ValueError as exc:
        raise ConfigError("fluid: %s" % exc) from None


def build_study_config(cfg):
    from ..kinetic import StudyConfig

    k = cfg.kinetic if cfg.kinetic is not None else default_section("kinetic")
    eps_list = [float(e) for e in k["eps_list"]]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigError("kinetic.eps_list must hold positive numbers")
    study = StudyConfig(nx=k["nx"], lx=k["lx"], t_end=k["t_end"],
                        dt=k["dt"], sigma=k["sigma"], r=k["r"])
    return study, eps_list


def _pocket_field(msh, pockets, species):
    vals = np.zeros(msh.n_cells)
    for k, entry in enumerate(pockets):
        if not (isinstance(entry, list) and len(entry) == 5):
            raise ConfigError(
                "init.pockets[%d] must be [species, cx, cy, radius, amplitude]"
                % k)
        s, cx, cy, radius, amp = entry
        if s not in (1, 2):
            raise ConfigError("init.pockets[%d]: species must be 1 or 2" % k)
        if radius <= 0:
            raise ConfigError("init.pockets[%d]: radius must be positive" % k)
        if s != species:
            continue
        rsq = (msh.cell_x - cx) ** 2 + (msh.cell_y - cy) ** 2
        vals += amp * np.exp(-rsq / (2.0 * radius ** 2))
    return vals


def build_initial_state(cfg, msh, params):
    """Initial densities on the mesh; chemicals start at zero and are
    overwritten by the first step's elliptic solve."""
    init = cfg.init
    kind = init["kind"]
    if kind == "pockets":
        n1 = _pocket_field(msh, init["pockets"], 1)
        n2 = _pocket_field(msh, init["pockets"], 2)
    elif kind == "stationary_perturbation":
        try:
            star1, star2 = model_mod.stationary_state(params)
        except ValueError as exc:
            raise ConfigError("init: %s" % exc) from None
        amp = init["amplitude"]
        n1 = star1 + amp * rng.uniform_doubles(cfg.seed, msh.n_cells, stream=1)
        n2 = star2 + amp * rng.uniform_doubles(cfg.seed, msh.n_cells, stream=2)
    elif kind == "constant":
        n1 = np.full(msh.n_cells, float(init["n1"]))
        n2 = np.full(msh.n_cells, float(init["n2"]))
    else:
        raise ConfigError("unknown init.kind %r" % kind)
    zeros = np.zeros(msh.n_cells)
    return MacroState(n1, n2, zeros.copy(), zeros.copy(), 0.0)


def snapshot_times(cfg):
    times = list(cfg.output["snapshot_times"]) if cfg.output else []
    if not times and cfg.snapshot_interval and cfg.step:
        t_end = cfg.step["t_end"]
        k = 1
        while k * cfg.snapshot_interval <= t_end * (1 + 1e-12):
            times.append(k * cfg.snapshot_interval)
            k += 1
    return [float(t) for t in times]
