"""Independent reference computations used to pin values in the tests.

Nothing here imports the package under test.  Scheme constants are
integrated exactly over the rationals; grid operators are assembled densely
from their definitions.
"""

from __future__ import annotations

from fractions import Fraction as Fr

import numpy as np

ALPHA1 = Fr(-300) * Fr(19, 8)
NODES = (Fr(1, 3), Fr(2, 3), Fr(1))


# ---- exact polynomial arithmetic, coefficient lists in ascending powers ----

def pmul(p, q):
    out = [Fr(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def padd(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def pscale(p, s):
    return [s * a for a in p]


def pint01(p):
    return sum(a / (k + 1) for k, a in enumerate(p))


def peval(p, x):
    return sum(a * x**k for k, a in enumerate(p))


def coeff_matrix(alpha1):
    a = Fr(alpha1)
    return [[a + 4, -6 * a - 6, 6 * a],
            [-6 * a - 6, 36 * a + 12, -36 * a],
            [6 * a, -36 * a, 36 * a]]


def a_in_zeta(tau, alpha1=ALPHA1):
    """A(tau, .) as an exact polynomial in zeta."""
    m = coeff_matrix(alpha1)
    tv = [tau, tau**2 / 2, tau**3 / 3]
    return [sum(tv[r] * m[r][k] for r in range(3)) for k in range(3)]


def a_value(tau, zeta, alpha1=ALPHA1):
    return peval(a_in_zeta(Fr(tau), alpha1), Fr(zeta))


def lagrange_poly(nodes, i):
    pts = [Fr(0)] + [Fr(c) for c in nodes]
    p = [Fr(1)]
    for m, cm in enumerate(pts):
        if m != i:
            p = pmul(p, [-cm / (pts[i] - cm), 1 / (pts[i] - cm)])
    return p


def exact_e(alpha1=ALPHA1, nodes=NODES):
    """E[i][j] = int_0^1 A(c_i, z) l_j(z) dz, i = 1..3, j = 0..3."""
    ls = [lagrange_poly(nodes, j) for j in range(4)]
    return [[pint01(pmul(a_in_zeta(Fr(c), alpha1), ls[j])) for j in range(4)] for c in nodes]


def exact_w(alpha1=ALPHA1, nodes=NODES):
    ls = [lagrange_poly(nodes, j) for j in range(4)]
    out = np.empty((3, 4, 4, 4), dtype=object)
    for i, c in enumerate(nodes):
        ai = a_in_zeta(Fr(c), alpha1)
        for a in range(4):
            pa = pmul(ai, ls[a])
            for b in range(4):
                pab = pmul(pa, ls[b])
                for cc in range(4):
                    out[i, a, b, cc] = pint01(pmul(pab, ls[cc]))
    return out


def char_poly3(m):
    """Monic characteristic polynomial coefficients (1, c2, c1, c0) of a 3x3 matrix."""
    tr = m[0][0] + m[1][1] + m[2][2]
    minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0]
              + m[0][0] * m[2][2] - m[0][2] * m[2][0]
              + m[1][1] * m[2][2] - m[1][2] * m[2][1])
    det = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
           - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
           + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    return (Fr(1), -tr, minors, -det)


def cubic_discriminant(p):
    a, b, c, d = p
    return 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2


def e_eigenvalues(alpha1=ALPHA1, nodes=NODES):
    e = [row[1:] for row in exact_e(alpha1, nodes)]
    roots = np.roots([float(x) for x in char_poly3(e)])
    return np.sort(roots)


# ---- dense grid model ----

def dense_kinetic(nx, ny, lx=2 * np.pi, ly=2 * np.pi):
    def circ(n):
        d = np.zeros((n, n))
        for k in range(n):
            d[k, k] += -2
            d[k, (k + 1) % n] += 1
            d[k, (k - 1) % n] += 1
        return d
    hx, hy = lx / nx, ly / ny
    return -(np.kron(np.eye(ny), circ(nx)) / hx**2 + np.kron(circ(ny), np.eye(nx)) / hy**2)


def dense_rhs(kmat, v, gamma, u):
    return -1j * (kmat @ u) + 1j * gamma * np.abs(u) ** 2 * u - 1j * v * u


def dense_split_jacobian(kmat, v, gamma, u):
    """Jacobian of (Re f, Im f) with respect to (Re u, Im u), from the product rule."""
    p, q = u.real, u.imag
    a = kmat + np.diag(v)
    # f = -i A u + i g (p^2 + q^2)(p + i q)
    # Re f = A q - g (p^2 + q^2) q,  Im f = -A p + g (p^2 + q^2) p
    d_re_dp = -gamma * np.diag(2 * p * q)
    d_re_dq = a - gamma * np.diag(p**2 + 3 * q**2)
    d_im_dp = -a + gamma * np.diag(3 * p**2 + q**2)
    d_im_dq = gamma * np.diag(2 * p * q)
    return np.block([[d_re_dp, d_re_dq], [d_im_dp, d_im_dq]])


def quadrature_phi(kmat, v, gamma, u0, stages, h, alpha1=ALPHA1, nodes=NODES, n_quad=64):
    """Phi_i = U_ci - u0 - h int_0^1 A(c_i, z) f(U_z) dz by brute-force Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(n_quad)
    x, w = 0.5 * (x + 1), 0.5 * w
    ls = [[float(c) for c in lagrange_poly(nodes, j)] for j in range(4)]
    z = [u0] + list(stages)
    out = []
    for i, c in enumerate(nodes):
        ai = [float(a) for a in a_in_zeta(Fr(c), alpha1)]
        acc = np.zeros_like(u0)
        for xq, wq in zip(x, w):
            uz = sum(np.polyval(ls[j][::-1], xq) * z[j] for j in range(4))
            acc = acc + wq * np.polyval(ai[::-1], xq) * dense_rhs(kmat, v, gamma, uz)
        out.append(stages[i] - u0 - h * acc)
    return np.array(out)


def dense_coupled_update(e, jac, phi_split, h):
    """Solve (I - h E kron J) r = -Phi on the stacked real stage vector."""
    n = jac.shape[0]
    m = np.eye(3 * n) - h * np.kron(np.asarray(e, dtype=float), jac)
    return np.linalg.solve(m, -phi_split.reshape(-1)).reshape(3, n)
