"""Comparison integrators: RK4, Gauss collocation (GAUSS2/GAUSS4) and AVF (AVF2/AVF4).

Implicit methods are written in increment form (unknowns are stage values
minus u0) and solved by simplified Newton with the Jacobian frozen at u0.
Two-stage methods solve their 4N coupled real system as a single sparse
matrix; their coefficient matrices have complex eigenvalues, so the
real stage decoupling used by MB4 is not available.
"""

from __future__ import annotations

import enum
import time
from functools import cache

import mpmath
import numpy as np
import scipy.sparse as sp

from .lattice import GridModel, merge, rhs, split
from .mb4 import Mb4Integrator, assemble_jacobian, contract_cubic, point_ordering
from .newton import NewtonConfig, NonConvergence, StepInfo, advance_with_halving
from .quadrature import MP_DPS, gauss_legendre_mp
from .sparse import factorize


class MethodId(enum.Enum):
    RK4 = "RK4"
    GAUSS2 = "GAUSS2"
    GAUSS4 = "GAUSS4"
    AVF2 = "AVF2"
    AVF4 = "AVF4"
    MB4 = "MB4"

    @property
    def order(self) -> int:
        return 2 if self in (MethodId.GAUSS2, MethodId.AVF2) else 4

    @classmethod
    def parse(cls, name) -> MethodId:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ValueError(f"unknown method {name!r}; choose from {[m.value for m in cls]}") from None


def rk4_step(model: GridModel, u0: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(model, u0)
    k2 = rhs(model, u0 + 0.5 * h * k1)
    k3 = rhs(model, u0 + 0.5 * h * k2)
    k4 = rhs(model, u0 + h * k3)
    return u0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


_S3 = np.sqrt(3.0)
GAUSS_TABLEAUS = {
    1: (np.array([[0.5]]), np.array([1.0])),
    2: (np.array([[0.25, 0.25 - _S3 / 6], [0.25 + _S3 / 6, 0.25]]), np.array([0.5, 0.5])),
}


def _coupled_factor(model, jac, coeff: np.ndarray, h: float, method: str):
    """Factor I - h (coeff (x) J) with all unknowns of a grid point kept adjacent."""
    s = coeff.shape[0]
    m = sp.identity(s * jac.shape[0], format="csr") - h * sp.kron(coeff, jac, format="csr")
    return factorize(m, point_ordering(model, 2 * s), method)


def _newton(residual, fact, u0: np.ndarray, z: np.ndarray, cfg: NewtonConfig, timer=None):
    """Simplified Newton on complex stage increments z of shape (s, N) about u0."""
    s = z.shape[0]
    r_norm = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        phi = split(residual(z)).reshape(-1)
        t0 = time.perf_counter()
        r = fact.solve(-phi).reshape(s, -1)
        if timer is not None:
            timer["solve"] += time.perf_counter() - t0
        z = z + merge(r)
        r_norm = float(np.max(np.abs(r)))
        if not np.isfinite(r_norm):
            break
        if r_norm <= cfg.tolerance(u0 + z):
            return z, it
    raise NonConvergence(r_norm, it)


def _gauss_substep(model, u0, h, stages, cfg, method="direct", timer=None):
    a, b = GAUSS_TABLEAUS[stages]
    d = np.linalg.solve(a.T, b)  # u1 = u0 + sum_i d_i Z_i

    def residual(z):
        f = np.stack([rhs(model, u0 + zj) for zj in z])
        return z - h * (a @ f)

    t0 = time.perf_counter()
    fact = _coupled_factor(model, assemble_jacobian(model, u0), a, h, method)
    if timer is not None:
        timer["factor"] += time.perf_counter() - t0
    z, iters = _newton(residual, fact, u0, np.zeros((stages, u0.size), dtype=complex), cfg, timer)
    return u0 + d @ z, iters


def gauss_step(model: GridModel, u0: np.ndarray, h: float, stages: int, cfg: NewtonConfig | None = None):
    """Gauss collocation step (stages=1: implicit midpoint, stages=2: order 4)."""
    cfg = cfg or NewtonConfig()
    u1, _ = advance_with_halving(lambda u, dt: _gauss_substep(model, u, dt, stages, cfg), u0, h,
                                 cfg.max_step_halvings)
    return u1


@cache
def avf2_weights() -> np.ndarray:
    """w[a, b, c] = int_0^1 m_a m_b m_c with m_0 = 1 - xi, m_1 = xi."""
    x, wq = np.polynomial.legendre.leggauss(2)
    x, wq = 0.5 * (x + 1), 0.5 * wq
    m = np.array([1 - x, x])
    return np.einsum("q,aq,bq,cq->abc", wq, m, m, m)


def _avf2_substep(model, u0, h, cfg, method="direct", timer=None):
    w = avf2_weights()[None]

    def residual(z):
        lin = -1j * model.apply_linear(u0 + 0.5 * z[0])
        cubic = 1j * model.gamma * contract_cubic(w, np.stack([u0, u0 + z[0]]))[0]
        return z - h * (lin + cubic)

    t0 = time.perf_counter()
    fact = _coupled_factor(model, assemble_jacobian(model, u0), np.array([[0.5]]), h, method)
    if timer is not None:
        timer["factor"] += time.perf_counter() - t0
    z, iters = _newton(residual, fact, u0, np.zeros((1, u0.size), dtype=complex), cfg, timer)
    return u0 + z[0], iters


def avf2_step(model: GridModel, u0: np.ndarray, h: float, cfg: NewtonConfig | None = None):
    cfg = cfg or NewtonConfig()
    u1, _ = advance_with_halving(lambda u, dt: _avf2_substep(model, u, dt, cfg), u0, h, cfg.max_step_halvings)
    return u1


@cache
def avf4_constants() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients of the two-stage AVF collocation method at the Gauss nodes.

    With l_i the linear Lagrange basis on the nodes, L_j(xi) = int_0^xi l_j and
    b_i = int_0^1 l_i = 1/2, returns

    * coupling[i, j] = (1/b_i) int_0^1 l_i L_j
    * w[i, a, b, c] = (1/b_i) int_0^1 l_i phi_a phi_b phi_c, phi = (1, L_1, L_2)
    * b
    """
    with mpmath.workdps(MP_DPS):
        r = mpmath.sqrt(3) / 6
        c1, c2 = mpmath.mpf(1) / 2 - r, mpmath.mpf(1) / 2 + r

        def ell(i, x):
            return (x - c2) / (c1 - c2) if i == 0 else (x - c1) / (c2 - c1)

        def big_l(j, x):
            # integral of a linear function from 0 to x
            if j == 0:
                return (x * x / 2 - c2 * x) / (c1 - c2)
            return (x * x / 2 - c1 * x) / (c2 - c1)

        xs, ws = gauss_legendre_mp(4)
        b = [mpmath.fsum(w * ell(i, x) for x, w in zip(xs, ws)) for i in range(2)]
        coupling = np.array([[float(mpmath.fsum(w * ell(i, x) * big_l(j, x) for x, w in zip(xs, ws)) / b[i])
                              for j in range(2)] for i in range(2)])
        phi = [[mpmath.mpf(1)] * 4, [big_l(0, x) for x in xs], [big_l(1, x) for x in xs]]
        w_t = np.empty((2, 3, 3, 3))
        for i in range(2):
            for a in range(3):
                for bb in range(3):
                    for c in range(3):
                        w_t[i, a, bb, c] = float(mpmath.fsum(
                            ws[q] * ell(i, xs[q]) * phi[a][q] * phi[bb][q] * phi[c][q] for q in range(4)) / b[i])
        return coupling, w_t, np.array([float(v) for v in b])


def _avf4_substep(model, u0, h, cfg, method="direct", timer=None):
    coupling, w, b = avf4_constants()

    def residual(z):
        lin = -1j * model.apply_linear(u0 + coupling @ z)
        cubic = 1j * model.gamma * contract_cubic(w, np.vstack([u0[None], z]))
        return z - h * (lin + cubic)

    t0 = time.perf_counter()
    fact = _coupled_factor(model, assemble_jacobian(model, u0), coupling, h, method)
    if timer is not None:
        timer["factor"] += time.perf_counter() - t0
    z, iters = _newton(residual, fact, u0, np.zeros((2, u0.size), dtype=complex), cfg, timer)
    return u0 + b @ z, iters


def avf4_step(model: GridModel, u0: np.ndarray, h: float, cfg: NewtonConfig | None = None):
    cfg = cfg or NewtonConfig()
    u1, _ = advance_with_halving(lambda u, dt: _avf4_substep(model, u, dt, cfg), u0, h, cfg.max_step_halvings)
    return u1


class ReferenceIntegrator:
    def __init__(self, method: MethodId, model: GridModel, cfg: NewtonConfig | None = None,
                 linear_solver: str = "direct"):
        self.method = MethodId.parse(method)
        if self.method is MethodId.MB4:
            raise ValueError("use Mb4Integrator for MB4")
        self.model = model
        self.cfg = cfg or NewtonConfig()
        self.linear_solver = linear_solver
        self.timings = {"factor": 0.0, "solve": 0.0}

    def _substep(self, u, dt):
        m, ls, t = self.method, self.linear_solver, self.timings
        if m is MethodId.GAUSS2:
            return _gauss_substep(self.model, u, dt, 1, self.cfg, ls, t)
        if m is MethodId.GAUSS4:
            return _gauss_substep(self.model, u, dt, 2, self.cfg, ls, t)
        if m is MethodId.AVF2:
            return _avf2_substep(self.model, u, dt, self.cfg, ls, t)
        return _avf4_substep(self.model, u, dt, self.cfg, ls, t)

    def step(self, u0: np.ndarray, h: float):
        if self.method is MethodId.RK4:
            return rk4_step(self.model, u0, h), StepInfo(0, 0, 1)
        return advance_with_halving(self._substep, u0, h, self.cfg.max_step_halvings)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_integrator(method, model: GridModel, cfg: NewtonConfig | None = None, workers: int = 1,
                    linear_solver: str = "direct"):
    method = MethodId.parse(method)
    if method is MethodId.MB4:
        return Mb4Integrator(model, cfg=cfg, workers=workers, linear_solver=linear_solver)
    return ReferenceIntegrator(method, model, cfg, linear_solver)
