"""Space-discretized 2D nonlinear Schrodinger-type problem on a periodic grid.

The semi-discrete system is

    i du/dt = K u - gamma (conj(u) * u) * u + V u

with ``K`` the negated 5-point periodic Laplacian, ``V`` a diagonal external
potential and ``gamma`` the nonlinearity strength.  Grid point ``(i, j)``
(0-based, ``i`` along x) lives at linear index ``j * nx + i``; this is the
0-based form of the 1-based ``(j - 1) * nx + i`` ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 2.0 * np.pi
    ly: float = 2.0 * np.pi

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs nx, ny >= 2, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n(self) -> int:
        return self.nx * self.ny

    def index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened x and y coordinates of every grid point, in index order."""
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        xx, yy = np.meshgrid(x, y, indexing="xy")
        return xx.ravel(), yy.ravel()


def _circulant_second_difference(n: int) -> sp.csr_matrix:
    # duplicates are summed, so for n == 2 both neighbours land on one entry
    rows = np.concatenate([np.arange(n)] * 3)
    cols = np.concatenate([np.arange(n), (np.arange(n) + 1) % n, (np.arange(n) - 1) % n])
    vals = np.concatenate([-2.0 * np.ones(n), np.ones(n), np.ones(n)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def build_kinetic(grid: GridSpec) -> sp.csr_matrix:
    """Kinetic matrix K = -(I_ny (x) D_nx / hx^2 + D_ny (x) I_nx / hy^2)."""
    dx = _circulant_second_difference(grid.nx) / grid.hx**2
    dy = _circulant_second_difference(grid.ny) / grid.hy**2
    k = -(sp.kron(sp.identity(grid.ny, format="csr"), dx, format="csr")
          + sp.kron(dy, sp.identity(grid.nx, format="csr"), format="csr"))
    k = k.tocsr()
    k.sum_duplicates()
    k.sort_indices()
    return k


def build_delta_potential(grid: GridSpec, v0: float) -> np.ndarray:
    """Potential equal to ``v0`` at the origin grid point and zero elsewhere."""
    v = np.zeros(grid.n)
    v[grid.index(0, 0)] = v0
    return v


def is_symmetric(a: sp.spmatrix) -> bool:
    a = sp.csr_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    diff = (a - a.T).tocsr()
    diff.eliminate_zeros()
    return diff.nnz == 0


@dataclass(frozen=True, eq=False)
class GridModel:
    grid: GridSpec
    kinetic: sp.csr_matrix
    potential: np.ndarray
    gamma: float

    def __post_init__(self):
        n = self.grid.n
        if self.kinetic.shape != (n, n):
            raise ValueError(f"kinetic matrix must be {n}x{n}, got {self.kinetic.shape}")
        if np.iscomplexobj(self.kinetic.data):
            raise ValueError("only real symmetric kinetic matrices are supported")
        if not is_symmetric(self.kinetic):
            raise ValueError("kinetic matrix must be symmetric")
        if np.shape(self.potential) != (n,):
            raise ValueError(f"potential must have {n} entries")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @classmethod
    def standard(cls, grid: GridSpec, gamma: float, v0: float = 0.0) -> GridModel:
        """5-point kinetic operator with an optional delta potential of depth ``v0``."""
        return cls(grid, build_kinetic(grid), build_delta_potential(grid, v0), float(gamma))

    @classmethod
    def with_kinetic(cls, grid: GridSpec, kinetic, potential=None, gamma: float = 0.0) -> GridModel:
        k = sp.csr_matrix(kinetic, dtype=float)
        k.sum_duplicates()
        k.sort_indices()
        v = np.zeros(grid.n) if potential is None else np.asarray(potential, dtype=float)
        return cls(grid, k, v, float(gamma))

    def hamiltonian_operator(self) -> sp.csr_matrix:
        """The linear part A = K + V as a sparse matrix."""
        return (self.kinetic + sp.diags(self.potential)).tocsr()

    def apply_linear(self, u: np.ndarray) -> np.ndarray:
        """(K + V) u for a state or a stack of states along axis 0."""
        u = np.asarray(u)
        if u.ndim == 1:
            return self.kinetic @ u + self.potential * u
        return (self.kinetic @ u.T).T + self.potential * u


def split(u: np.ndarray) -> np.ndarray:
    """Complex N-vector(s) to real 2N-vector(s) ordered (p; q)."""
    u = np.asarray(u)
    return np.concatenate([u.real, u.imag], axis=-1)


def merge(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def rhs(model: GridModel, u: np.ndarray) -> np.ndarray:
    """f(u) = -i K u + i gamma |u|^2 u - i V u."""
    u = np.asarray(u, dtype=complex)
    return -1j * model.apply_linear(u) + 1j * model.gamma * (u.real**2 + u.imag**2) * u


def energy_gradient(model: GridModel, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(dH/dp, dH/dq) recovered from rhs through f = S grad H, S = [[0, I/2], [-I/2, 0]]."""
    f = rhs(model, u)
    return -2.0 * f.imag, 2.0 * f.real


@dataclass(frozen=True)
class Observables:
    u_kinetic: float
    u_nonlinear: float
    u_external: float
    total_energy: float
    probability: float
    participation: float


def observables(model: GridModel, u: np.ndarray, raw_participation: bool = False) -> Observables:
    u = np.asarray(u, dtype=complex)
    uk_c = np.vdot(u, model.kinetic @ u)
    uk = float(uk_c.real)
    if abs(uk_c.imag) > 1e-12 * abs(uk) + 1e-300:
        raise ArithmeticError(f"kinetic energy has imaginary residue {uk_c.imag:.3e}")
    density = u.real**2 + u.imag**2
    prob = float(np.sum(density))
    sum4 = float(np.sum(density**2))
    ui = -0.5 * model.gamma * sum4
    ue = float(np.dot(model.potential, density))
    if raw_participation:
        part = sum4
    else:
        part = sum4 / prob**2 if prob > 0 else 0.0
    return Observables(uk, ui, ue, uk + ui + ue, prob, part)


def initial_condition(grid: GridSpec) -> np.ndarray:
    """u(x, y) = 1 + 2 cos x + 2 cos y sampled at x_i = i hx, y_j = j hy."""
    x, y = grid.coordinates()
    return (1.0 + 2.0 * np.cos(x) + 2.0 * np.cos(y)).astype(complex)


def uniform_state(grid: GridSpec) -> np.ndarray:
    return np.full(grid.n, 1.0 / np.sqrt(grid.n), dtype=complex)
