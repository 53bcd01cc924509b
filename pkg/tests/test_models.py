import numpy as np
import pytest

from nirb import models


class TestManufactured:
    def test_center_value(self):
        assert models.manufactured_u(1.0, 0.5, 0.5) == pytest.approx(0.0390625)

    def test_linear_in_time(self):
        assert models.manufactured_u(2.0, 0.5, 0.5) == pytest.approx(0.078125)

    def test_vanishes_on_boundary(self, rng):
        t = rng.uniform(0.0, 3.0, 20)
        s = rng.uniform(0.0, 1.0, 20)
        for edge in (models.manufactured_u(t, 0.0, s),
                     models.manufactured_u(t, 1.0, s),
                     models.manufactured_u(t, s, 0.0),
                     models.manufactured_u(t, s, 1.0)):
            assert np.abs(edge).max() == 0.0

    def test_forcing_corner_and_center(self):
        assert models.manufactured_f(3.0, 0.0, 0.0) == pytest.approx(0.0)
        assert models.manufactured_f(0.0, 0.5, 0.5) == pytest.approx(0.0390625)

    def test_forcing_residual_fd(self, rng):
        # f must equal u_t - Laplace(u); check with central differences at
        # random interior points.
        eps = 1e-4
        t = rng.uniform(0.1, 2.0, 50)
        x = rng.uniform(0.1, 0.9, 50)
        y = rng.uniform(0.1, 0.9, 50)
        u = models.manufactured_u
        ut = (u(t + eps, x, y) - u(t - eps, x, y)) / (2.0 * eps)
        lap = (u(t, x + eps, y) + u(t, x - eps, y) + u(t, x, y + eps)
               + u(t, x, y - eps) - 4.0 * u(t, x, y)) / eps ** 2
        res = models.manufactured_f(t, x, y) - (ut - lap)
        assert np.abs(res).max() <= 1e-5

    def test_gradient_fd(self, rng):
        eps = 1e-6
        t, x, y = 1.3, rng.uniform(0.1, 0.9, 30), rng.uniform(0.1, 0.9, 30)
        gx, gy = models.manufactured_grad(t, x, y)
        u = models.manufactured_u
        assert gx == pytest.approx((u(t, x + eps, y) - u(t, x - eps, y))
                                   / (2 * eps), abs=1e-6)
        assert gy == pytest.approx((u(t, x, y + eps) - u(t, x, y - eps))
                                   / (2 * eps), abs=1e-6)


class TestHeatProblem:
    def test_range(self):
        assert models.HeatProblem(mu=0.5).in_range()
        assert models.HeatProblem(mu=9.5).in_range()
        assert not models.HeatProblem(mu=0.4).in_range()
        assert not models.HeatProblem(mu=10.0).in_range()


class TestBrusselatorProblem:
    def test_fixed_point(self):
        p = models.BrusselatorProblem(3.0, 2.0, 0.008)
        assert p.fixed_point == pytest.approx((3.0, 2.0 / 3.0))

    def test_stability_threshold(self):
        assert models.BrusselatorProblem(2.0, 4.0, 0.01).stable
        assert not models.BrusselatorProblem(2.0, 6.0, 0.01).stable

    def test_range(self):
        assert models.BrusselatorProblem(3.0, 2.0, 0.008).in_range()
        assert not models.BrusselatorProblem(5.0, 2.0, 0.008).in_range()
        assert not models.BrusselatorProblem(3.0, 2.0, 0.2).in_range()

    def test_initial_state(self):
        from nirb import mesh
        m = mesh.build_structured(2, 2)
        state = models.BrusselatorProblem(3.0, 2.0, 0.008).initial_state(m)
        u1, u2 = np.split(state, 2)
        assert u1 == pytest.approx(2.0 + 0.25 * m.nodes[:, 1])
        assert u2 == pytest.approx(1.0 + 0.8 * m.nodes[:, 0])


class TestBrusselatorRhs:
    def test_steady_state_for_all_parameters(self):
        for a in (2.0, 2.5, 3.0, 4.0):
            for b in (1.0, 2.0, 3.0, 4.0):
                r1, r2 = models.brusselator_rhs((a, b, 0.01), a, b / a)
                assert abs(r1) <= 1e-13 and abs(r2) <= 1e-13

    def test_species_one_extinct(self):
        r1, r2 = models.brusselator_rhs((3.0, 2.0, 0.01), 0.0, 1.5)
        assert (r1, r2) == (3.0, 0.0)

    def test_hand_value(self):
        r1, r2 = models.brusselator_rhs((3.0, 2.0, 0.01), 1.0, 1.0)
        assert (r1, r2) == pytest.approx((1.0, 1.0))

    def test_autocatalysis_is_quadratic_in_species_one(self):
        # At (1, 2) the correct rates are (2, 0); swapping the exponents onto
        # species two would give (4, -2) instead.
        r1, r2 = models.brusselator_rhs((3.0, 2.0, 0.01), 1.0, 2.0)
        assert (r1, r2) == pytest.approx((2.0, 0.0))

    def test_mass_budget(self, rng):
        u1 = rng.uniform(0.0, 4.0, 25)
        u2 = rng.uniform(0.0, 4.0, 25)
        r1, r2 = models.brusselator_rhs((2.5, 3.0, 0.02), u1, u2)
        assert r1 + r2 == pytest.approx(2.5 - u1, abs=1e-12)

    def test_accepts_problem_object(self):
        p = models.BrusselatorProblem(3.0, 2.0, 0.008)
        assert models.brusselator_rhs(p, 1.0, 2.0) == pytest.approx((2.0, 0.0))

    def test_ode_attracts_to_fixed_point(self):
        # Midpoint integration of the pure reaction system from a perturbed
        # start must settle at (a, b/a). A model with the autocatalytic
        # nonlinearity attached to the wrong species settles elsewhere.
        state = np.array([2.0, 1.0])
        dt = 0.01
        for _ in range(4000):
            r = np.array(models.brusselator_rhs((3.0, 2.0, 0.0), *state))
            mid = state + 0.5 * dt * r
            state = state + dt * np.array(
                models.brusselator_rhs((3.0, 2.0, 0.0), *mid))
        assert state == pytest.approx([3.0, 2.0 / 3.0], abs=1e-3)
