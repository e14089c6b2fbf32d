import numpy as np
import pytest

from mb4nls.lattice import GridModel, GridSpec, initial_condition, observables, rhs
from mb4nls.mb4 import Mb4Integrator
from mb4nls.newton import NewtonConfig
from mb4nls.reference import (
    GAUSS_TABLEAUS,
    MethodId,
    ReferenceIntegrator,
    avf2_step,
    avf2_weights,
    avf4_constants,
    avf4_step,
    gauss_step,
    make_integrator,
    rk4_step,
)

RNG = np.random.default_rng(23)
IMPLICIT = ["GAUSS2", "GAUSS4", "AVF2", "AVF4"]


def random_state(n):
    return RNG.standard_normal(n) + 1j * RNG.standard_normal(n)


@pytest.fixture(scope="module")
def model():
    return GridModel.standard(GridSpec(6, 5), 0.1, v0=-2.0)


def fourier_setup():
    g = GridSpec(8, 8)
    x, y = g.coordinates()
    kappa = (2 - 2 * np.cos(g.hx)) / g.hx**2
    return GridModel.standard(g, 0.0), np.exp(1j * x), kappa


class TestMethodId:
    def test_orders(self):
        orders = {m.value: m.order for m in MethodId}
        assert orders == {"RK4": 4, "GAUSS2": 2, "GAUSS4": 4, "AVF2": 2, "AVF4": 4, "MB4": 4}

    def test_parse(self):
        assert MethodId.parse("avf4") is MethodId.AVF4
        assert MethodId.parse(MethodId.RK4) is MethodId.RK4
        with pytest.raises(ValueError):
            MethodId.parse("euler")

    def test_factory(self, model):
        assert isinstance(make_integrator("MB4", model), Mb4Integrator)
        assert isinstance(make_integrator("gauss4", model), ReferenceIntegrator)
        with pytest.raises(ValueError):
            ReferenceIntegrator(MethodId.MB4, model)


class TestTableaus:
    def test_gauss4(self):
        a, b = GAUSS_TABLEAUS[2]
        s3 = np.sqrt(3)
        np.testing.assert_allclose(a, [[0.25, 0.25 - s3 / 6], [0.25 + s3 / 6, 0.25]], rtol=1e-15)
        np.testing.assert_allclose(a.sum(axis=1), [0.5 - s3 / 6, 0.5 + s3 / 6], rtol=1e-15)
        np.testing.assert_array_equal(b, [0.5, 0.5])

    def test_avf2_weights(self):
        w = avf2_weights()
        assert w[0, 0, 1] == pytest.approx(1 / 12, rel=1e-15)
        assert w[0, 0, 0] == pytest.approx(1 / 4, rel=1e-15)
        assert w.sum() == pytest.approx(1.0, rel=1e-15)

    def test_avf4_constants(self):
        coupling, w, b = avf4_constants()
        np.testing.assert_allclose(b, [0.5, 0.5], rtol=1e-15)
        # the 2-node rule is exact for l_i L_j, so coupling[i, j] = L_j(c_i), the Gauss matrix
        np.testing.assert_allclose(coupling, GAUSS_TABLEAUS[2][0], rtol=1e-14)
        np.testing.assert_array_equal(w, w.transpose(0, 1, 3, 2))
        # phi = (1, L1, L2) sums to 1 + xi; b_i-weighted contraction integrates (1 + xi)^3
        total = (b[:, None, None, None] * w).sum()
        assert total == pytest.approx(((2**4) - 1) / 4, rel=1e-14)


class TestExplicit:
    def test_rk4_constant_state(self):
        m = GridModel.standard(GridSpec(4, 4), 0.0)
        u0 = np.full(16, 0.5 + 0.1j)
        np.testing.assert_allclose(rk4_step(m, u0, 0.1), u0, atol=1e-14)

    def test_rk4_matches_taylor(self):
        m, u0, kappa = fourier_setup()
        h = 0.1
        z = -1j * kappa * h
        taylor = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
        np.testing.assert_allclose(rk4_step(m, u0, h), taylor * u0, atol=1e-14)


class TestImplicit:
    @pytest.mark.parametrize("method", IMPLICIT)
    def test_zero_step_is_identity(self, model, method):
        u0 = random_state(model.grid.n)
        u1, _ = make_integrator(method, model).step(u0, 0.0)
        np.testing.assert_array_equal(u1, u0)

    @pytest.mark.parametrize("method", IMPLICIT + ["RK4", "MB4"])
    def test_consistency(self, model, method):
        u0 = random_state(model.grid.n)
        f0 = rhs(model, u0)
        integ = make_integrator(method, model)
        errs = []
        for h in (1e-3, 5e-4):
            u1, _ = integ.step(u0, h)
            errs.append(np.max(np.abs(u1 - u0 - h * f0)))
        # second-order remainder: halving h quarters the defect
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_avf2_equals_midpoint_when_linear(self):
        m = GridModel.standard(GridSpec(5, 5), 0.0, v0=-1.0)
        u0 = random_state(25)
        np.testing.assert_allclose(avf2_step(m, u0, 0.05), gauss_step(m, u0, 0.05, 1), atol=1e-13)

    def test_avf4_equals_gauss4_when_linear(self):
        m = GridModel.standard(GridSpec(5, 5), 0.0, v0=-1.0)
        u0 = random_state(25)
        np.testing.assert_allclose(avf4_step(m, u0, 0.05), gauss_step(m, u0, 0.05, 2), atol=1e-13)

    @pytest.mark.parametrize("method,order", [("GAUSS2", 2), ("AVF2", 2), ("GAUSS4", 4), ("AVF4", 4)])
    def test_fourier_local_error(self, method, order):
        m, u0, kappa = fourier_setup()
        integ = make_integrator(method, m)
        errs = []
        for h in (0.2, 0.1):
            u1, _ = integ.step(u0, h)
            errs.append(np.max(np.abs(u1 - np.exp(-1j * kappa * h) * u0)))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(order + 1, abs=0.3)

    @pytest.mark.parametrize("method", ["AVF2", "AVF4"])
    def test_energy_exact_class(self, model, method):
        u = initial_condition(model.grid)
        h0 = observables(model, u).total_energy
        integ = make_integrator(method, model)
        for _ in range(5):
            u, _ = integ.step(u, 0.02)
        assert abs(observables(model, u).total_energy - h0) <= 1e-12 * abs(h0)

    @pytest.mark.parametrize("method", ["GAUSS2", "GAUSS4"])
    def test_probability_exact_class(self, model, method):
        u = initial_condition(model.grid)
        p0 = observables(model, u).probability
        integ = make_integrator(method, model)
        for _ in range(5):
            u, _ = integ.step(u, 0.02)
        assert abs(observables(model, u).probability - p0) <= 1e-13 * p0

    def test_order_four_methods_agree(self):
        g = GridSpec(16, 16)
        m = GridModel.standard(g, 0.1)
        u0 = initial_condition(g)
        finals = {}
        for method in ("MB4", "GAUSS4", "AVF4", "RK4"):
            integ = make_integrator(method, m)
            u = u0
            for _ in range(20):
                u, _ = integ.step(u, 0.005)
            finals[method] = u
        scale = np.linalg.norm(u0)
        names = list(finals)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                assert np.linalg.norm(finals[names[i]] - finals[names[j]]) <= 1e-8 * scale

    def test_gmres_path(self, model):
        u0 = random_state(model.grid.n)
        a, _ = ReferenceIntegrator(MethodId.AVF4, model).step(u0, 0.02)
        b, _ = ReferenceIntegrator(MethodId.AVF4, model, linear_solver="gmres").step(u0, 0.02)
        np.testing.assert_allclose(a, b, atol=1e-11)

    def test_step_info(self, model):
        u0 = initial_condition(model.grid)
        integ = ReferenceIntegrator(MethodId.GAUSS4, model, NewtonConfig())
        _, info = integ.step(u0, 0.01)
        assert info.halvings == 0 and info.substeps == 1 and 1 <= info.newton_iters < 15
        assert integ.timings["factor"] > 0 and integ.timings["solve"] > 0
