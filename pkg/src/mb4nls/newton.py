"""Simplified-Newton settings and the halve-on-failure step policy shared by all implicit methods."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

_UNIT_ROUNDOFF = np.finfo(float).eps / 2


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping rule ``|r|_inf <= max(epsilon, roundoff_factor * u * |U|_inf)``.

    ``u`` is the unit round-off and ``U`` the current iterate.  The second term
    only matters once the state is large enough that ``epsilon`` lies below
    what double precision can resolve; ``roundoff_factor = 0`` gives the plain
    absolute test.
    """

    epsilon: float = 1e-13
    max_iters: int = 50
    max_step_halvings: int = 4
    roundoff_factor: float = 10.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.roundoff_factor < 0:
            raise ValueError("roundoff_factor must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.max_step_halvings < 0:
            raise ValueError("max_step_halvings must be non-negative")


    def tolerance(self, iterate: np.ndarray) -> float:
        if self.roundoff_factor == 0:
            return self.epsilon
        return max(self.epsilon, self.roundoff_factor * _UNIT_ROUNDOFF * float(np.max(np.abs(iterate))))


class NonConvergence(ArithmeticError):
    """Simplified Newton failed; ``residual`` is the last max-norm update."""

    def __init__(self, residual: float, iters: int, t: float | None = None):
        self.residual = residual
        self.iters = iters
        self.t = t
        where = "" if t is None else f" at t={t:g}"
        super().__init__(f"simplified Newton did not converge{where}: |r|_inf={residual:.3e} after {iters} iterations")


@dataclass
class StepInfo:
    newton_iters: int = 0
    halvings: int = 0
    substeps: int = 1


def advance_with_halving(
    substep: Callable[[np.ndarray, float], tuple[np.ndarray, int]],
    u0: np.ndarray,
    h: float,
    max_halvings: int,
) -> tuple[np.ndarray, StepInfo]:
    """Advance exactly ``h`` by ``2**k`` sub-steps, raising k on Newton failure.

    ``substep(u, dt)`` returns ``(u_next, iterations)`` or raises NonConvergence.
    """
    total = 0
    last: NonConvergence | None = None
    for k in range(max_halvings + 1):
        m = 2**k
        dt = h / m
        u = u0
        try:
            for _ in range(m):
                u, iters = substep(u, dt)
                total += iters
        except NonConvergence as exc:
            total += exc.iters
            last = exc
            continue
        return u, StepInfo(total, k, m)
    raise NonConvergence(last.residual, total)
