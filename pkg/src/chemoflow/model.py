"""Closed-form model terms: reactions, sensitivities, stationary state.

Species 1 is the predator, species 2 the prey. Each species senses one
chemical signal produced by the other species; the sensitivity law is
either linear in the local density (default) or constant.

Reactions are evaluated with negative densities clamped to zero, so the
growth terms are defined (and Lipschitz) on all of R^2; the Jacobian uses
the zero subgradient at the clamp kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHEMO_LAWS = ("linear", "constant")


@dataclass(frozen=True)
class ModelParams:
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    d1: float = 1.0
    d2: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    chemo_law: str = "linear"
    # +1: predators convert prey into growth; -1: plain competition
    f2_coupling_sign: int = +1

    def __post_init__(self):
        if self.chemo_law not in CHEMO_LAWS:
            raise ValueError(f"chemo_law must be one of {CHEMO_LAWS}, got {self.chemo_law!r}")
        if self.f2_coupling_sign not in (-1, +1):
            raise ValueError(f"f2_coupling_sign must be -1 or +1, got {self.f2_coupling_sign}")
        if self.d1 <= 0.0 or self.d2 <= 0.0:
            raise ValueError("diffusion coefficients must be positive")


def reaction(n1, n2, p):
    """Growth terms (F1, F2) with negative densities clamped to zero."""
    r1 = np.maximum(n1, 0.0)
    r2 = np.maximum(n2, 0.0)
    f1 = r1 * (p.a1 - p.b1 * r1 - p.c1 * r2)
    f2 = r2 * (p.a2 - p.c2 * r2 + p.f2_coupling_sign * p.b2 * r1)
    return f1, f2


def reaction_jacobian(n1, n2, p):
    """Partial derivatives (dF1/dn1, dF1/dn2, dF2/dn1, dF2/dn2).

    At the clamp kink (n_i = 0) the zero subgradient is used, matching
    the one-sided derivative from the clamped region.
    """
    r1 = np.maximum(n1, 0.0)
    r2 = np.maximum(n2, 0.0)
    live1 = np.asarray(n1) > 0.0
    live2 = np.asarray(n2) > 0.0
    s = p.f2_coupling_sign
    d11 = np.where(live1, p.a1 - 2.0 * p.b1 * r1 - p.c1 * r2, 0.0)
    d12 = np.where(live2, -p.c1 * r1, 0.0)
    d21 = np.where(live1, s * p.b2 * r2, 0.0)
    d22 = np.where(live2, p.a2 - 2.0 * p.c2 * r2 + s * p.b2 * r1, 0.0)
    return d11, d12, d21, d22


def chemo_sensitivity(n, kappa, law="linear"):
    """Sensitivity chi(n): kappa * n for the linear law, kappa constant."""
    if law == "linear":
        return kappa * np.asarray(n, dtype=float)
    if law == "constant":
        return np.full_like(np.asarray(n, dtype=float), kappa)
    raise ValueError(f"unknown chemo law {law!r}")


def chemo_sensitivity_derivative(n, kappa, law="linear"):
    n = np.asarray(n, dtype=float)
    if law == "linear":
        return np.full_like(n, kappa)
    if law == "constant":
        return np.zeros_like(n)
    raise ValueError(f"unknown chemo law {law!r}")


def buoyancy_coefficient(n1, n2):
    """Density excess Q driving the buoyancy force: total population."""
    return np.asarray(n1, dtype=float) + np.asarray(n2, dtype=float)


def stationary_state(p):
    """Coexistence state (n1*, n2*) where both growth terms vanish.

    Solves a1 - b1 n1 - c1 n2 = 0 together with
    a2 - c2 n2 + f2_coupling_sign * b2 n1 = 0. Raises ValueError when the
    interaction matrix is singular (no isolated coexistence state).
    """
    s = p.f2_coupling_sign
    det = p.b1 * p.c2 + s * p.b2 * p.c1
    scale = max(abs(p.b1 * p.c2), abs(p.b2 * p.c1), 1e-300)
    if abs(det) <= 1e-14 * scale:
        raise ValueError(
            "interaction matrix is singular; no isolated coexistence state")
    n1 = (p.a1 * p.c2 - p.a2 * p.c1) / det
    n2 = (p.b1 * p.a2 + s * p.b2 * p.a1) / det
    return n1, n2
