"""Energy-preserving MB4 time integration for a 2D nonlinear Schrodinger-type lattice."""

from .harness import RunConfig, run
from .lattice import (
    GridModel,
    GridSpec,
    Observables,
    build_delta_potential,
    build_kinetic,
    initial_condition,
    observables,
    rhs,
)
from .mb4 import Mb4Integrator, Mb4Scheme, default_scheme, mb4_step
from .newton import NewtonConfig, NonConvergence
from .reference import MethodId, make_integrator

__version__ = "0.1.0"

__all__ = [
    "GridModel",
    "GridSpec",
    "Mb4Integrator",
    "Mb4Scheme",
    "MethodId",
    "NewtonConfig",
    "NonConvergence",
    "Observables",
    "RunConfig",
    "build_delta_potential",
    "build_kinetic",
    "default_scheme",
    "initial_condition",
    "make_integrator",
    "mb4_step",
    "observables",
    "rhs",
    "run",
]
