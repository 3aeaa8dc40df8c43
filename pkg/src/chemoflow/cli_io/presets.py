"""Named experiment presets.

Each preset is a complete config-section table; anything the source
experiments leave unstated (pocket positions and amplitudes, dt, obstacle
rectangles, viscosity) carries the documented defaults chosen here. A
preset function returns plain nested dicts so the config layer can treat
file input and presets uniformly.
"""

from __future__ import annotations

import copy

# reaction/chemical table shared by the box experiments
_BOX_MODEL = {
    "a1": 10.0, "b1": 2.0, "c1": 0.4,
    "a2": 0.1, "b2": 2.0, "c2": 0.01,
    "d1": 1.0, "d2": 1.0,
    "alpha1": 1.0, "alpha2": 1.0,
    "beta1": 20.0, "beta2": 100.0,
    "kappa1": 2.0, "kappa2": -0.8,
    "chemo_law": "linear",
    "f2_coupling_sign": 1,
}

# competition parameter set with a strictly positive coexistence state
_PATTERN_MODEL = dict(_BOX_MODEL, a1=0.61, b1=0.4575, c1=9.5,
                      a2=0.52, b2=0.31, c2=8.2, f2_coupling_sign=-1)

# channel-run table: same chemotaxis constants, but reaction coefficients
# scaled so both carrying capacities sit near one (the box table's tiny c2
# lets the pursuer climb to O(1e3) and eventually chokes the Newton solve)
_CHANNEL_MODEL = dict(_BOX_MODEL, a1=1.0, b1=1.0, c1=0.5,
                      a2=0.5, b2=0.5, c2=1.0,
                      beta1=1.0, beta2=1.0)

_UNIT_GRID = {"nx": 64, "ny": 64, "lx": 1.0, "ly": 1.0, "obstacles": []}

# channel with two staircase-exact obstacle rectangles (their edges land on
# the 128x64 grid and on every coarsening by 2)
_CHANNEL_GRID = {
    "nx": 128, "ny": 64, "lx": 10.0, "ly": 4.0,
    "obstacles": [[2.5, 3.125, 0.0, 2.25], [5.625, 6.25, 1.75, 4.0]],
}

# two pockets per species on crossed diagonals: the pursuer starts where
# the evader is not
_EX1_INIT = {
    "kind": "pockets",
    "pockets": [
        [1, 0.25, 0.25, 0.07, 5.0],
        [1, 0.75, 0.75, 0.07, 5.0],
        [2, 0.75, 0.25, 0.07, 5.0],
        [2, 0.25, 0.75, 0.07, 5.0],
    ],
}

# fourfold-symmetric data: species 2 central, species 1 on a symmetric ring,
# so the whole state commutes with quarter-turn rotations
_EX2_INIT = {
    "kind": "pockets",
    "pockets": [
        [1, 0.30, 0.30, 0.07, 5.0],
        [1, 0.70, 0.30, 0.07, 5.0],
        [1, 0.70, 0.70, 0.07, 5.0],
        [1, 0.30, 0.70, 0.07, 5.0],
        [2, 0.50, 0.50, 0.07, 5.0],
    ],
}

# upstream pockets for the channel runs
_CHANNEL_INIT = {
    "kind": "pockets",
    "pockets": [
        [1, 1.2, 3.0, 0.3, 5.0],
        [2, 1.2, 1.0, 0.3, 5.0],
    ],
}

_PRESETS = {
    "example1": {
        "seed": 0,
        "grid": dict(_UNIT_GRID),
        "model": dict(_BOX_MODEL),
        "step": {"dt": 1e-3, "t_end": 0.15, "advection": "off",
                 "implicit_reaction": True, "max_dt_halvings": 4},
        "init": copy.deepcopy(_EX1_INIT),
        "output": {"format": "csv",
                   "snapshot_times": [0.01, 0.05, 0.075, 0.15],
                   "fields": ["n1", "n2", "w1", "w2"]},
    },
    "example2": {
        "seed": 0,
        "grid": dict(_UNIT_GRID),
        "model": dict(_BOX_MODEL, kappa2=0.0),
        "step": {"dt": 1e-3, "t_end": 0.15, "advection": "off",
                 "implicit_reaction": True, "max_dt_halvings": 4},
        "init": copy.deepcopy(_EX2_INIT),
        "output": {"format": "csv",
                   "snapshot_times": [0.01, 0.05, 0.075, 0.15],
                   "fields": ["n1", "n2", "w1", "w2"]},
    },
    "example3": {
        "seed": 0,
        "grid": dict(_UNIT_GRID, nx=128, ny=128),
        "model": dict(_PATTERN_MODEL),
        "step": {"dt": 2.5e-4, "t_end": 0.01, "advection": "off",
                 "implicit_reaction": True, "max_dt_halvings": 4},
        "init": {"kind": "stationary_perturbation", "amplitude": 1e-3},
        "output": {"format": "csv",
                   "snapshot_times": [0.001, 0.005, 0.01],
                   "fields": ["n1", "n2", "w1", "w2"]},
    },
    "test1": {
        "seed": 0,
        "grid": copy.deepcopy(_CHANNEL_GRID),
        "model": dict(_CHANNEL_MODEL),
        "step": {"dt": 1e-2, "t_end": 3.0, "advection": "upwind",
                 "implicit_reaction": True, "max_dt_halvings": 4},
        "fluid": {"enabled": True, "nu": 0.1, "k_conv": 1.0,
                  "grad_phi": [0.0, 0.0], "inflow_scale": 1.0},
        "init": copy.deepcopy(_CHANNEL_INIT),
        "output": {"format": "csv",
                   "snapshot_times": [1.0, 2.0, 3.0],
                   "fields": ["n1", "n2", "w1", "w2", "speed", "pressure"]},
    },
    "kinetic": {
        "seed": 0,
        "kinetic": {"nx": 200, "lx": 1.0, "t_end": 0.06, "dt": 2e-5,
                    "sigma": 4.0, "r": 1.0,
                    "eps_list": [0.4, 0.2, 0.1]},
        "output": {"format": "csv", "snapshot_times": [], "fields": []},
    },
}

_PRESETS["test2"] = copy.deepcopy(_PRESETS["test1"])
_PRESETS["test2"]["fluid"]["grad_phi"] = [0.0, -1.0]


def preset_names():
    return sorted(_PRESETS)


def get_preset(name):
    """Deep copy of the named preset's section tables."""
    try:
        table = _PRESETS[name]
    except KeyError:
        raise KeyError("unknown preset %r (available: %s)"
                       % (name, ", ".join(preset_names()))) from None
    return copy.deepcopy(table)
