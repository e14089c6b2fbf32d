"""MB4: fourth-order energy-preserving continuous-stage Runge-Kutta integrator.

The stage polynomial U_tau is cubic and is represented by its values at the
nodes ``0, c1, c2, c3`` (``c3 = 1``).  One step solves

    U_ci = u0 + h int_0^1 A(c_i, zeta) f(U_zeta) dzeta,   i = 1, 2, 3

by simplified Newton with the Jacobian frozen at u0.  The 3x3 coefficient
matrix E of the tensor-product Newton matrix ``I - h E (x) J`` has real
eigenvalues, so each iteration reduces to three independent sparse solves
with ``I - h lambda_i J``.  Since c3 = 1, the new state is ``U_c3`` itself.
"""

from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
import scipy.sparse as sp

from .lattice import GridModel, merge, split
from .newton import NewtonConfig, NonConvergence, advance_with_halving
from .quadrature import MP_DPS, gauss_legendre_mp, to_mpf
from .sparse import eig3_real, factorize, grid_nested_dissection, interleave

ALPHA1 = Fraction(-300 * 19, 8)
NODES = (Fraction(1, 3), Fraction(2, 3), Fraction(1))
ALPHA1_BOUND = -300 * 0.7770503941


def coefficient_matrix(alpha1):
    """The 3x3 matrix M in A(tau, zeta) = [tau, tau^2/2, tau^3/3] M [1, zeta, zeta^2]^T."""
    a = alpha1
    return [
        [a + 4, -6 * a - 6, 6 * a],
        [-6 * a - 6, 36 * a + 12, -36 * a],
        [6 * a, -36 * a, 36 * a],
    ]


def eval_A(scheme: Mb4Scheme, tau: float, zeta: float) -> float:
    return float(np.array([tau, tau**2 / 2, tau**3 / 3]) @ scheme.a_coeff @ np.array([1.0, zeta, zeta**2]))


def lagrange_basis(nodes, i: int, zeta):
    """Cubic Lagrange polynomial l_i over the four nodes (0, c1, c2, c3)."""
    out = 1
    for m, cm in enumerate(nodes):
        if m != i:
            out = out * (zeta - cm) / (nodes[i] - cm)
    return out


def _mp_setup(alpha1, nodes):
    m = coefficient_matrix(to_mpf(alpha1))
    c = [mpmath.mpf(0)] + [to_mpf(x) for x in nodes]

    def a_poly(tau, zeta):
        tv = (tau, tau**2 / 2, tau**3 / 3)
        zv = (1, zeta, zeta**2)
        return mpmath.fsum(tv[p] * m[p][q] * zv[q] for p in range(3) for q in range(3))

    return a_poly, c


def precompute_e(alpha1=ALPHA1, nodes=NODES, n_quad: int = 4) -> np.ndarray:
    """E_ij = int_0^1 A(c_i, zeta) l_j(zeta) dzeta for i = 1..3, j = 0..3.

    The integrand has degree 5, so the 4-node Gauss-Legendre rule is exact;
    it is evaluated in multiprecision and rounded once.
    """
    with mpmath.workdps(MP_DPS):
        a_poly, c = _mp_setup(alpha1, nodes)
        xs, ws = gauss_legendre_mp(n_quad)
        e = np.empty((3, 4))
        for i in range(3):
            for j in range(4):
                e[i, j] = float(mpmath.fsum(w * a_poly(c[i + 1], x) * lagrange_basis(c, j, x) for x, w in zip(xs, ws)))
    return e


def precompute_w(alpha1=ALPHA1, nodes=NODES, n_quad: int = 6, increments: bool = False) -> np.ndarray:
    """W_i[a, b, c] = int_0^1 A(c_i, zeta) l_a l_b l_c dzeta (degree 11, 6-node rule exact).

    With z = (u0, U_c1, U_c2, U_c3) the cubic term integrates as
    sum_abc W_i[a,b,c] conj(z_a) z_b z_c.

    ``increments=True`` replaces l_0 by the constant 1, giving the tensor for
    z = (u0, U_c1 - u0, U_c2 - u0, U_c3 - u0).
    """
    with mpmath.workdps(MP_DPS):
        a_poly, c = _mp_setup(alpha1, nodes)
        xs, ws = gauss_legendre_mp(n_quad)
        lv = [[lagrange_basis(c, j, x) for x in xs] for j in range(4)]
        if increments:
            lv[0] = [mpmath.mpf(1)] * n_quad
        w_t = np.empty((3, 4, 4, 4))
        for i in range(3):
            aw = [w * a_poly(c[i + 1], x) for x, w in zip(xs, ws)]
            for a in range(4):
                for b in range(4):
                    for cc in range(b, 4):
                        val = float(mpmath.fsum(aw[q] * lv[a][q] * lv[b][q] * lv[cc][q] for q in range(n_quad)))
                        w_t[i, a, b, cc] = w_t[i, a, cc, b] = val
    return w_t


@dataclass(frozen=True, eq=False)
class Mb4Scheme:
    alpha1: float
    nodes: tuple
    a_coeff: np.ndarray
    e_ext: np.ndarray
    eigenvalues: np.ndarray
    t: np.ndarray
    t_inv: np.ndarray
    w_tensor: np.ndarray
    w_increment: np.ndarray

    @classmethod
    def build(cls, alpha1=ALPHA1, nodes=NODES) -> Mb4Scheme:
        if not float(alpha1) < ALPHA1_BOUND:
            raise ValueError(f"alpha1 must be below {ALPHA1_BOUND:.10g}, got {float(alpha1)}")
        nodes = tuple(nodes)
        if len(nodes) != 3 or float(nodes[2]) != 1.0:
            raise ValueError("MB4 needs three nodes with c3 = 1")
        if len({float(c) for c in nodes}) != 3 or not all(0 < float(c) <= 1 for c in nodes):
            raise ValueError("nodes must be distinct and lie in (0, 1]")
        e = precompute_e(alpha1, nodes)
        lam, t, t_inv = eig3_real(e[:, 1:])
        a_coeff = np.array(coefficient_matrix(float(alpha1)))
        return cls(float(alpha1), tuple(float(c) for c in nodes), a_coeff, e, lam, t, t_inv,
                   precompute_w(alpha1, nodes), precompute_w(alpha1, nodes, increments=True))

    @property
    def e(self) -> np.ndarray:
        return self.e_ext[:, 1:]

    def dump(self) -> str:
        """Plain key = value listing of all constants, 17 significant digits."""
        def fmt(v):
            return " ".join(f"{x:.17g}" for x in np.ravel(v))
        lines = [
            f"alpha1 = {self.alpha1:.17g}",
            f"c = {fmt(self.nodes)}",
            f"E = {fmt(self.e_ext)}",
            f"eigenvalues = {fmt(self.eigenvalues)}",
            f"W = {fmt(self.w_tensor)}",
        ]
        return "\n".join(lines) + "\n"


def contract_cubic(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """sum_abc w[s, a, b, c] conj(z_a) z_b z_c, pointwise over the grid."""
    s, nb = w.shape[0], w.shape[1]
    n = z.shape[1]
    zz = (z[:, None, :] * z[None, :, :]).reshape(nb * nb, n)
    q = (w.reshape(s * nb, nb * nb) @ zz).reshape(s, nb, n)
    return np.einsum("san,an->sn", q, z.conj())


def eval_phi(model: GridModel, scheme: Mb4Scheme, u0: np.ndarray, stages: np.ndarray, h: float) -> np.ndarray:
    """Residual Phi_i = U_ci - u0 - h int_0^1 A(c_i, zeta) f(U_zeta) dzeta, shape (3, N)."""
    d = stages - u0
    # E_i0 u0 + sum_j E_ij U_j rewritten around u0 keeps round-off at the size of the increments
    y = scheme.e_ext.sum(axis=1)[:, None] * u0 + scheme.e @ d
    lin = -1j * model.apply_linear(y)
    # same expansion for the cubic term: U_zeta = u0 + sum_j l_j(zeta) (U_j - u0)
    cubic = 1j * model.gamma * contract_cubic(scheme.w_increment, np.vstack([u0[None, :], d]))
    return d - h * (lin + cubic)


def assemble_jacobian(model: GridModel, u0: np.ndarray) -> sp.csr_matrix:
    """Real-split Jacobian of f at u0, ordered (p; q)."""
    p, q = u0.real, u0.imag
    g = model.gamma
    a = model.hamiltonian_operator()
    j = sp.bmat([
        [sp.diags(-2 * g * p * q), a + sp.diags(-g * (p**2 + 3 * q**2))],
        [-a + sp.diags(g * (3 * p**2 + q**2)), sp.diags(2 * g * p * q)],
    ], format="csr")
    j.sort_indices()
    return j


def point_ordering(model: GridModel, blocks: int) -> np.ndarray:
    return interleave(grid_nested_dissection(model.grid.nx, model.grid.ny), blocks)


def factor_shifted(model: GridModel, jac: sp.csr_matrix, h_lambda: float, method: str = "direct"):
    """Factor I - h_lambda J."""
    m = sp.identity(jac.shape[0], format="csr") - h_lambda * jac
    return factorize(m, point_ordering(model, 2), method)


class StageSystem:
    """The three factorized stage matrices of one step, solved serially."""

    def __init__(self, factors):
        self.factors = factors

    @classmethod
    def build(cls, model, scheme, u0, h, method="direct") -> StageSystem:
        jac = assemble_jacobian(model, u0)
        return cls([factor_shifted(model, jac, h * lam, method) for lam in scheme.eigenvalues])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return np.stack([f.solve(r) for f, r in zip(self.factors, rhs)])


def _stage_worker(conn, model, mine, eigenvalues, method):
    factors = {}
    while True:
        msg = conn.recv()
        try:
            if msg[0] == "factor":
                _, u0, h = msg
                jac = assemble_jacobian(model, u0)
                factors = {i: factor_shifted(model, jac, h * eigenvalues[i], method) for i in mine}
                conn.send(("ok", None))
            elif msg[0] == "solve":
                conn.send(("ok", {i: factors[i].solve(r) for i, r in msg[1].items()}))
            elif msg[0] == "close":
                conn.send(("ok", None))
                return
        except Exception as exc:  # forwarded to the parent
            conn.send(("err", exc))


class StageWorkerPool:
    """Stage factorizations and solves distributed over worker processes.

    Stage i is owned by worker ``i % workers``.  Every worker rebuilds J from
    u0 itself, so factors and solutions are bit-identical to the serial path.
    """

    def __init__(self, model: GridModel, scheme: Mb4Scheme, workers: int = 3, method: str = "direct"):
        if not 2 <= workers <= 3:
            raise ValueError("a worker pool needs 2 or 3 workers")
        ctx = multiprocessing.get_context("spawn")
        self._conns = []
        self._procs = []
        self._owner = {}
        for w in range(workers):
            mine = [i for i in range(3) if i % workers == w]
            for i in mine:
                self._owner[i] = w
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_stage_worker, args=(child, model, mine, scheme.eigenvalues, method), daemon=True)
            proc.start()
            child.close()
            self._conns.append(parent)
            self._procs.append(proc)

    def _gather(self):
        out = []
        for conn in self._conns:
            status, payload = conn.recv()
            if status == "err":
                raise payload
            out.append(payload)
        return out

    def factorize(self, u0: np.ndarray, h: float) -> StageWorkerPool:
        for conn in self._conns:
            conn.send(("factor", u0, h))
        self._gather()
        return self

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        for w, conn in enumerate(self._conns):
            conn.send(("solve", {i: rhs[i] for i in range(3) if self._owner[i] == w}))
        out = np.empty_like(rhs)
        for part in self._gather():
            for i, x in part.items():
                out[i] = x
        return out

    def close(self):
        for conn in self._conns:
            try:
                conn.send(("close",))
                conn.recv()
            except (OSError, EOFError):
                pass
        for proc in self._procs:
            proc.join(timeout=5)
        self._conns, self._procs = [], []


def newton_solve(model, scheme, sys, u0, h, cfg: NewtonConfig):
    """Simplified Newton for the three stage values; returns (stages, iterations)."""
    stages = np.tile(u0, (3, 1))
    r_norm = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        phi = split(eval_phi(model, scheme, u0, stages, h))
        rbar = sys.solve(-(scheme.t_inv @ phi))
        r = scheme.t @ rbar
        stages = stages + merge(r)
        r_norm = float(np.max(np.abs(r)))
        if not np.isfinite(r_norm):
            break
        if r_norm <= cfg.tolerance(stages):
            return stages, it
    raise NonConvergence(r_norm, it)


class Mb4Integrator:
    """Stateful MB4 stepper owning the stage-solve backend and phase timers."""

    def __init__(self, model: GridModel, scheme: Mb4Scheme | None = None, cfg: NewtonConfig | None = None,
                 workers: int = 1, linear_solver: str = "direct"):
        self.model = model
        self.scheme = scheme or default_scheme()
        self.cfg = cfg or NewtonConfig()
        self.linear_solver = linear_solver
        self.timings = {"factor": 0.0, "solve": 0.0, "residual": 0.0}
        self._pool = StageWorkerPool(model, self.scheme, workers, linear_solver) if workers > 1 else None

    def _substep(self, u0, h):
        t0 = time.perf_counter()
        if self._pool is None:
            sys = StageSystem.build(self.model, self.scheme, u0, h, self.linear_solver)
        else:
            sys = self._pool.factorize(u0, h)
        self.timings["factor"] += time.perf_counter() - t0
        timed = _TimedSolver(sys, self.timings)
        t1 = time.perf_counter()
        try:
            stages, iters = newton_solve(self.model, self.scheme, timed, u0, h, self.cfg)
        finally:
            self.timings["residual"] += time.perf_counter() - t1 - timed.elapsed
        return stages[2], iters

    def step(self, u0: np.ndarray, h: float):
        return advance_with_halving(self._substep, u0, h, self.cfg.max_step_halvings)

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _TimedSolver:
    def __init__(self, sys, timings):
        self.sys = sys
        self.timings = timings
        self.elapsed = 0.0

    def solve(self, rhs):
        t0 = time.perf_counter()
        out = self.sys.solve(rhs)
        dt = time.perf_counter() - t0
        self.elapsed += dt
        self.timings["solve"] += dt
        return out


def mb4_step(model, scheme, u0, h, cfg: NewtonConfig | None = None, linear_solver: str = "direct"):
    """One MB4 step of size h; returns (u1, StepInfo)."""
    cfg = cfg or NewtonConfig()

    def substep(u, dt):
        sys = StageSystem.build(model, scheme, u, dt, linear_solver)
        stages, iters = newton_solve(model, scheme, sys, u, dt, cfg)
        return stages[2], iters

    return advance_with_halving(substep, u0, h, cfg.max_step_halvings)


_DEFAULT = None


def default_scheme() -> Mb4Scheme:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Mb4Scheme.build()
    return _DEFAULT
