"""Pseudo-spectral toolkit for variable-density incompressible flow on the torus.

Submodules
----------
spectral
    Grid, FFT derivatives, projections and Littlewood-Paley blocks.
norms
    Lebesgue, Sobolev and Besov norms, functional-inequality ratios, atoms.
stokes
    Periodic Stokes solver and divergence right inverse.
solver
    Nonlinear, linearized, backward and heat solvers.
decay
    Time-weighted decay diagnostics.
dyadic
    Dynamic interpolation over dyadic atoms.
lagrangian
    Flow maps, Lagrangian coordinates and stability metrics.
config, io, cli
    Configuration, persistence and the command-line runner.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .interp import BACKEND  # noqa: F401
from .spectral import ScalarField, TorusGrid, VectorField  # noqa: F401
from .solver import Environment, FlowState, INSSolver, Trajectory, run, solve_backward, solve_heat, solve_linearized  # noqa: F401
