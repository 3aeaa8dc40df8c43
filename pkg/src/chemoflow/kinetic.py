"""1D two-velocity kinetic solver in micro-macro form, used to verify the
diffusion limit of the transport model numerically.

The distribution for each species is split as f = M n + eps * g with a
two-point velocity set {-r, +r}, counting measure, and M = 1/2 per velocity.
One step treats the stiff relaxation -(sigma/eps^2) g implicitly and the
fluctuation transport explicitly with upwind differences; the density
equation closes the flux with centered differences on the updated g. As
eps -> 0 the update degenerates, without dt restrictions, into an explicit
macro step with diffusion coefficient r^2 / (d sigma), which is exactly the
reference scheme `macro_reference_step` marches. Periodic boundaries
throughout; chemical fields solve on the circulant Laplacian via FFT.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import model
from .model import ModelParams

# explicit-part stability constant, see cfl_limit
CFL_SAFETY = 1.0


@dataclass(frozen=True)
class KineticParams:
    sigma1: float = 4.0
    sigma2: float = 4.0
    r: float = 1.0
    eps: float = 0.1

    def __post_init__(self):
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise ValueError("relaxation rates must be positive")
        if self.r <= 0.0:
            raise ValueError("velocity radius must be positive")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")

    @property
    def velocities(self):
        return np.array([-self.r, self.r])


@dataclass
class KineticState:
    n1: np.ndarray
    n2: np.ndarray
    g1: np.ndarray          # (2, nx): fluctuation at v = -r and v = +r
    g2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    t: float = 0.0

    def copy(self):
        return KineticState(self.n1.copy(), self.n2.copy(),
                            self.g1.copy(), self.g2.copy(),
                            self.w1.copy(), self.w2.copy(), self.t)

    def reconstruct(self, weights, eps):
        """Distribution values f = M n + eps g, shape (2, nx) per species."""
        f1 = weights[:, None] * self.n1[None, :] + eps * self.g1
        f2 = weights[:, None] * self.n2[None, :] + eps * self.g2
        return f1, f2


def equilibrium_weight(velocities):
    """Uniform equilibrium over the discrete velocity set (counting measure)."""
    v = np.asarray(velocities, dtype=np.float64)
    return np.full(v.shape, 1.0 / v.size)


def limit_diffusion_coefficient(p, d=1):
    """Limit diffusion coefficients (r^2 / (d sigma_i)) for both species."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return p.r ** 2 / (d * p.sigma1), p.r ** 2 / (d * p.sigma2)


def cfl_limit(p, dx, sigma=None):
    """Largest stable dt for the explicit part of the update.

    The centered macro flux limits dt by the parabolic bound
    dx^2 sigma / (2 r^2) (diffusion number <= 1/2 at the limit diffusivity)
    and the upwind fluctuation transport adds an eps dx / (2 r) allowance;
    the sum is scaled by CFL_SAFETY = 1.
    """
    s = min(p.sigma1, p.sigma2) if sigma is None else sigma
    return CFL_SAFETY * (dx * dx * s / (2.0 * p.r ** 2)
                         + p.eps * dx / (2.0 * p.r))


def _centered(a, dx):
    return (np.roll(a, -1) - np.roll(a, 1)) / (2.0 * dx)


def _upwind_gradient(g, velocities, dx):
    """v * dg/dx per velocity row, upwinded by the sign of v."""
    out = np.empty_like(g)
    for k, v in enumerate(velocities):
        if v >= 0.0:
            out[k] = v * (g[k] - np.roll(g[k], 1)) / dx
        else:
            out[k] = v * (np.roll(g[k], -1) - g[k]) / dx
    return out


def _project_out_mean(g, weights):
    """Remove the velocity average so that <g> = 0 exactly (roundoff)."""
    return g - weights[:, None] * g.sum(axis=0)[None, :]


def solve_chemical_periodic(source, alpha, dx):
    """(-d2/dx2 + alpha) w = source on the periodic grid, via the exact
    circulant inverse of the three-point Laplacian."""
    n = source.size
    wave = 2.0 * np.pi * np.fft.rfftfreq(n)
    symbol = alpha + (2.0 - 2.0 * np.cos(wave)) / dx ** 2
    return np.fft.irfft(np.fft.rfft(source) / symbol, n)


def _chemical_fields(n1, n2, mp, dx):
    w1 = solve_chemical_periodic(mp.beta1 * n2, mp.alpha1, dx)
    w2 = solve_chemical_periodic(mp.beta2 * n1, mp.alpha2, dx)
    return w1, w2


def micro_macro_step(state, p, mp, dx, dt):
    """One asymptotic-preserving step of the micro-macro system.

    Stiff relaxation -(sigma/eps^2) g is implicit; the macro gradient and
    chemotaxis sources (both O(1/eps^2)) ride inside the same implicit
    denominator, so the eps -> 0 limit reproduces the explicit macro step.
    Reactions enter the density equation at the old densities.
    """
    limit = cfl_limit(p, dx)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            "dt %.3e violates the kinetic CFL bound %.3e" % (dt, limit))
    vel = p.velocities
    weights = equilibrium_weight(vel)
    eps2 = p.eps ** 2
    w1, w2 = _chemical_fields(state.n1, state.n2, mp, dx)
    chi1 = model.chemo_sensitivity(state.n1, mp.kappa1, mp.chemo_law)
    chi2 = model.chemo_sensitivity(state.n2, mp.kappa2, mp.chemo_law)
    f1, f2 = model.reaction(state.n1, state.n2, mp)

    new_g = []
    new_n = []
    for g, n, chi, w, sigma, f in ((state.g1, state.n1, chi1, w1, p.sigma1, f1),
                                   (state.g2, state.n2, chi2, w2, p.sigma2, f2)):
        grad_n = _centered(n, dx)
        transport = _upwind_gradient(g, vel, dx)
        transport = transport - weights[:, None] * transport.sum(axis=0)[None, :]
        # G^1(v) = (d sigma / (r^2 |V|)) v chi(n) dw/dx, odd in v
        src = (sigma / (p.r ** 2 * vel.size)) * vel[:, None] \
            * (chi * _centered(w, dx))[None, :]
        rhs = g - dt * (vel[:, None] * weights[:, None] * grad_n[None, :] / eps2
                        + transport / p.eps
                        - src / eps2)
        g_next = rhs / (1.0 + dt * sigma / eps2)
        g_next = _project_out_mean(g_next, weights)
        flux = (vel[:, None] * g_next).sum(axis=0)
        n_next = n - dt * _centered(flux, dx) + dt * f
        new_g.append(g_next)
        new_n.append(n_next)

    return KineticState(new_n[0], new_n[1], new_g[0], new_g[1], w1, w2,
                        state.t + dt)


def macro_reference_step(n1, n2, p, mp, dx, dt):
    """Explicit macro step that the kinetic update converges to as eps -> 0:
    same centered stencils, diffusion coefficient r^2/sigma per species."""
    d1, d2 = limit_diffusion_coefficient(p)
    w1, w2 = _chemical_fields(n1, n2, mp, dx)
    chi1 = model.chemo_sensitivity(n1, mp.kappa1, mp.chemo_law)
    chi2 = model.chemo_sensitivity(n2, mp.kappa2, mp.chemo_law)
    f1, f2 = model.reaction(n1, n2, mp)
    flux1 = -d1 * _centered(n1, dx) + chi1 * _centered(w1, dx)
    flux2 = -d2 * _centered(n2, dx) + chi2 * _centered(w2, dx)
    n1_next = n1 - dt * _centered(flux1, dx) + dt * f1
    n2_next = n2 - dt * _centered(flux2, dx) + dt * f2
    return n1_next, n2_next


@dataclass(frozen=True)
class StudyConfig:
    nx: int = 200
    lx: float = 1.0
    t_end: float = 0.06
    dt: float = 2e-5
    sigma: float = 4.0
    r: float = 1.0
    # flat profile plus one harmonic; the odd perturbation of the initial
    # distribution is eps-independent, so the prepared gap to the macro
    # solution carries a genuine O(eps) initial-layer contribution
    density_base: float = 1.0
    density_wave: float = 0.0
    odd_fraction: float = 0.5
    params: ModelParams = None

    def model_params(self):
        if self.params is not None:
            return self.params
        # pure diffusion limit: no reactions, no chemotaxis
        return ModelParams(0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                           kappa1=0.0, kappa2=0.0)


def study_initial_state(cfg, eps):
    """f(+-r) = M n0 (1 +- odd_fraction sin(2 pi x)) split into (n, g)."""
    x = (np.arange(cfg.nx) + 0.5) * (cfg.lx / cfg.nx)
    n0 = cfg.density_base + cfg.density_wave * np.cos(2.0 * np.pi * x / cfg.lx)
    odd = cfg.odd_fraction * np.sin(2.0 * np.pi * x / cfg.lx)
    weights = equilibrium_weight(np.array([-cfg.r, cfg.r]))
    g = np.vstack([-weights[0] * n0 * odd, weights[1] * n0 * odd]) / eps
    zeros = np.zeros_like(n0)
    return KineticState(n0.copy(), n0.copy(), g, g.copy(),
                        zeros.copy(), zeros.copy(), 0.0)


def run_kinetic(state, p, mp, dx, dt, t_end):
    nsteps = int(round(t_end / dt))
    for _ in range(nsteps):
        state = micro_macro_step(state, p, mp, dx, dt)
    return state


def run_macro_reference(n1, n2, p, mp, dx, dt, t_end):
    nsteps = int(round(t_end / dt))
    for _ in range(nsteps):
        n1, n2 = macro_reference_step(n1, n2, p, mp, dx, dt)
    return n1, n2


def convergence_study(eps_list, cfg=None):
    """Gap between the kinetic and limit solutions for decreasing eps.

    Returns rows {eps, error, ratio}: error is the species-summed L1 gap at
    t_end against the macro reference run from the same initial densities,
    ratio is error(previous eps)/error(this eps) (first row carries None).
    """
    cfg = cfg or StudyConfig()
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    mp = cfg.model_params()
    dx = cfg.lx / cfg.nx
    rows = []
    prev_err = None
    for eps in eps_list:
        p = KineticParams(sigma1=cfg.sigma, sigma2=cfg.sigma, r=cfg.r, eps=eps)
        state = study_initial_state(cfg, eps)
        ref1, ref2 = state.n1.copy(), state.n2.copy()
        state = run_kinetic(state, p, mp, dx, cfg.dt, cfg.t_end)
        ref1, ref2 = run_macro_reference(ref1, ref2, p, mp, dx, cfg.dt,
                                         cfg.t_end)
        err = float((np.abs(state.n1 - ref1) + np.abs(state.n2 - ref2)).sum()
                    * dx)
        rows.append({"eps": eps, "error": err,
                     "ratio": None if prev_err is None else prev_err / err})
        prev_err = err
    return rows
