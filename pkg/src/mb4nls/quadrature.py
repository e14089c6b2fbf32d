"""Gauss-Legendre rules on [0, 1], in float64 and in multiprecision."""

from __future__ import annotations

from fractions import Fraction
from functools import cache

import mpmath
import numpy as np

MP_DPS = 40


def to_mpf(x) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@cache
def gauss_legendre_mp(n: int, dps: int = MP_DPS) -> tuple[tuple, tuple]:
    """n-point rule on [0, 1] with nodes polished by Newton on P_n at ``dps`` digits."""
    with mpmath.workdps(dps + 10):
        xs, ws = [], []
        for x0 in np.polynomial.legendre.leggauss(n)[0]:
            x = mpmath.mpf(x0)
            for _ in range(100):
                p, dp = _legendre_and_derivative(n, x)
                dx = p / dp
                x -= dx
                if abs(dx) < mpmath.mpf(10) ** (-(dps + 5)):
                    break
            p, dp = _legendre_and_derivative(n, x)
            xs.append((x + 1) / 2)
            ws.append(1 / ((1 - x * x) * dp * dp))
    return tuple(xs), tuple(ws)


def _legendre_and_derivative(n, x):
    p0, p1 = mpmath.mpf(1), x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp
