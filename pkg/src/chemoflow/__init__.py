"""Implicit finite-volume solvers for cross-diffusion population models
with chemical signalling, optional fluid transport, and a 1D kinetic
validator for the diffusion limit."""

__version__ = "0.1.0"

from . import _kernels

__all__ = ["__version__", "_kernels"]
