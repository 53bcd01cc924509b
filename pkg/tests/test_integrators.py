import numpy as np
import pytest

from nirb import fem, integrators, mesh, models


@pytest.fixture(scope="module")
def dirichlet_2x2():
    m = mesh.build_structured(2, 2)
    return fem.assemble(m, bc="dirichlet_zero")


@pytest.fixture(scope="module")
def neumann_8x8():
    m = mesh.build_structured(8, 8)
    return fem.assemble(m, bc="neumann_natural")


class TestTimeGrid:
    def test_spacing(self):
        g = integrators.TimeGrid(1.0, 2.0, 4)
        assert g.dt == pytest.approx(0.25)
        t = g.times()
        assert t.shape == (5,)
        assert t[0] == 1.0 and t[-1] == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            integrators.TimeGrid(0.0, 1.0, 0)
        with pytest.raises(ValueError):
            integrators.TimeGrid(1.0, 1.0, 4)


class TestHeatSchemes:
    def test_backward_euler_single_free_dof(self, dirichlet_2x2):
        # One interior node: M_ff = [1/8], K_ff = [4]. With dt = 1/32 the
        # update is (M + dt K) u1 = M u0, i.e. u1 = 0.5 for u0 = 1, the same
        # arithmetic as the unit system M = K = [1], dt = 1.
        u0 = np.zeros(dirichlet_2x2.n_dofs)
        u0[4] = 1.0
        grid = integrators.TimeGrid(0.0, 1.0 / 32.0, 1)
        traj = integrators.heat_backward_euler(dirichlet_2x2, 1.0, None, u0,
                                               grid)
        assert traj.values[1, 4] == pytest.approx(0.5, abs=1e-12)

    def test_crank_nicolson_single_free_dof(self, dirichlet_2x2):
        u0 = np.zeros(dirichlet_2x2.n_dofs)
        u0[4] = 1.0
        grid = integrators.TimeGrid(0.0, 1.0 / 32.0, 1)
        traj = integrators.heat_crank_nicolson(dirichlet_2x2, 1.0, None, u0,
                                               grid)
        assert traj.values[1, 4] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_zero_data_stays_zero(self, dirichlet_2x2):
        grid = integrators.TimeGrid(0.0, 1.0, 8)
        u0 = np.zeros(dirichlet_2x2.n_dofs)
        for march in (integrators.heat_backward_euler,
                      integrators.heat_crank_nicolson):
            traj = march(dirichlet_2x2, 2.0, None, u0, grid)
            assert np.abs(traj.values).max() == 0.0

    def test_source_free_decay_monotone(self):
        m = mesh.build_structured(8, 8)
        forms = fem.assemble(m, bc="dirichlet_zero")
        u0 = np.sin(np.pi * m.nodes[:, 0]) * np.sin(np.pi * m.nodes[:, 1])
        u0[m.boundary_mask] = 0.0
        grid = integrators.TimeGrid(0.0, 0.1, 10)
        traj = integrators.heat_backward_euler(forms, 1.0, None, u0, grid)
        sup = np.abs(traj.values).max(axis=1)
        assert np.all(np.diff(sup) < 0.0)
        assert sup[-1] < 0.3 * sup[0]

    def test_cn_beats_be_at_equal_step(self):
        # Against a tiny-step reference, the trapezoidal march lands much
        # closer than implicit Euler at the same coarse step.
        m = mesh.build_structured(4, 4)
        forms = fem.assemble(m, bc="dirichlet_zero")
        u0 = np.sin(np.pi * m.nodes[:, 0]) * np.sin(np.pi * m.nodes[:, 1])
        u0[m.boundary_mask] = 0.0
        coarse = integrators.TimeGrid(0.0, 0.2, 4)
        ref_grid = integrators.TimeGrid(0.0, 0.2, 512)
        ref = integrators.heat_crank_nicolson(forms, 1.0, None, u0, ref_grid,
                                              cg_tol=1e-12)
        be = integrators.heat_backward_euler(forms, 1.0, None, u0, coarse)
        cn = integrators.heat_crank_nicolson(forms, 1.0, None, u0, coarse)
        err_be = np.abs(be.values[-1] - ref.values[-1]).max()
        err_cn = np.abs(cn.values[-1] - ref.values[-1]).max()
        assert err_cn < 0.2 * err_be

    def test_shape_validation(self, dirichlet_2x2):
        grid = integrators.TimeGrid(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            integrators.heat_backward_euler(dirichlet_2x2, 1.0, None,
                                            np.zeros(3), grid)


def scalar_implicit_euler(params, state, dt, iters=30):
    """Two-variable implicit-Euler oracle solved by a dense Newton loop."""
    a, b = params[0], params[1]
    u = np.array(state, dtype=float)
    s = np.array(state, dtype=float)
    for _ in range(iters):
        r1, r2 = models.brusselator_rhs((a, b, 0.0), u[0], u[1])
        g = u - s - dt * np.array([r1, r2])
        J = np.eye(2) - dt * np.array(
            [[2 * u[0] * u[1] - (b + 1), u[0] ** 2],
             [b - 2 * u[0] * u[1], -u[0] ** 2]])
        u = u - np.linalg.solve(J, g)
    return u


class TestBrusselatorNewton:
    def test_steady_state_returns_immediately(self, neumann_8x8):
        n = neumann_8x8.n_dofs
        a, b = 3.0, 2.0
        state = np.concatenate([np.full(n, a), np.full(n, b / a)])
        out = integrators.brusselator_step_newton(neumann_8x8, (a, b, 0.02),
                                                  state, 0.05)
        assert out == pytest.approx(state, abs=1e-10)

    def test_constant_state_matches_scalar_oracle(self, neumann_8x8):
        # With no diffusion a spatially constant state evolves by the plain
        # two-variable implicit-Euler update.
        n = neumann_8x8.n_dofs
        state = np.concatenate([np.full(n, 1.5), np.full(n, 2.5)])
        dt = 0.05
        out = integrators.brusselator_step_newton(neumann_8x8,
                                                  (3.0, 2.0, 0.0), state, dt)
        want = scalar_implicit_euler((3.0, 2.0), (1.5, 2.5), dt)
        assert out[:n] == pytest.approx(np.full(n, want[0]), abs=1e-9)
        assert out[n:] == pytest.approx(np.full(n, want[1]), abs=1e-9)

    def test_step_is_first_order_consistent(self, neumann_8x8):
        p = models.BrusselatorProblem(3.0, 2.0, 0.01)
        state = p.initial_state(neumann_8x8.mesh)
        moves = []
        for dt in (0.02, 0.01):
            out = integrators.brusselator_step_newton(neumann_8x8,
                                                      (3.0, 2.0, 0.01),
                                                      state, dt)
            moves.append(np.abs(out - state).max())
        assert moves[0] / moves[1] == pytest.approx(2.0, rel=0.15)

    def test_exhausted_newton_raises(self, neumann_8x8):
        from nirb.linalg import ConvergenceError
        p = models.BrusselatorProblem(3.0, 2.0, 0.01)
        state = p.initial_state(neumann_8x8.mesh)
        with pytest.raises(ConvergenceError):
            integrators.brusselator_step_newton(neumann_8x8, (3.0, 2.0, 0.01),
                                                state, 0.05, tol=1e-15,
                                                max_iter=1)


class TestBrusselatorRk2:
    def test_scalar_surrogate_rate(self, neumann_8x8):
        # Uniform fields see no diffusion, so the step is the midpoint rule
        # on the reaction alone. With rates (1, -1) at state (1, 1) the
        # updated first species is 1 + 0.1 * (1 + 1.05^2 * 0.95 - 1.05).
        n = neumann_8x8.n_dofs
        state = np.ones(2 * n)
        out = integrators.brusselator_step_rk2(neumann_8x8, (1.0, 0.0, 0.03),
                                               state, 0.1)
        assert out[:n] == pytest.approx(np.full(n, 1.0997375), abs=1e-12)
        assert out[n:] == pytest.approx(np.full(n, 0.8952625), abs=1e-12)

    def test_steady_state_fixed(self, neumann_8x8):
        n = neumann_8x8.n_dofs
        a, b = 2.5, 3.0
        state = np.concatenate([np.full(n, a), np.full(n, b / a)])
        out = integrators.brusselator_step_rk2(neumann_8x8, (a, b, 0.05),
                                               state, 0.01)
        assert np.abs(out - state).max() <= 1e-13

    def test_agreement_with_newton(self, neumann_8x8):
        # The explicit march lumps the mass matrix, so the two schemes agree
        # only up to the spatial lumping gap (about h^2); a wrong reaction
        # term or coupling sign would separate them at order one.
        p = models.BrusselatorProblem(3.0, 2.0, 0.01)
        state0 = p.initial_state(neumann_8x8.mesh)
        explicit = integrators.brusselator_trajectory(
            neumann_8x8, (3.0, 2.0, 0.01), state0,
            integrators.TimeGrid(0.0, 0.5, 100), scheme="rk2")
        implicit = integrators.brusselator_trajectory(
            neumann_8x8, (3.0, 2.0, 0.01), state0,
            integrators.TimeGrid(0.0, 0.5, 100), scheme="newton")
        diff = np.abs(explicit.values[-1] - implicit.values[-1]).max()
        assert diff <= 5e-2

    def test_instability_reported_with_step(self, neumann_8x8):
        # dt far above the diffusion stability bound blows up the explicit
        # march; the failure must name the offending step.
        p = models.BrusselatorProblem(3.0, 2.0, 1.0)
        state0 = p.initial_state(neumann_8x8.mesh)
        grid = integrators.TimeGrid(0.0, 7.5, 30)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match="step"):
                integrators.brusselator_trajectory(neumann_8x8,
                                                   (3.0, 2.0, 1.0),
                                                   state0, grid, scheme="rk2")


class TestTrajectory:
    def test_split_fields(self, neumann_8x8):
        p = models.BrusselatorProblem(3.0, 2.0, 0.01)
        state0 = p.initial_state(neumann_8x8.mesh)
        traj = integrators.brusselator_trajectory(
            neumann_8x8, p, state0, integrators.TimeGrid(0.0, 0.1, 2),
            scheme="rk2")
        u1, u2 = traj.split_fields()
        n = neumann_8x8.n_dofs
        assert u1.shape == (3, n) and u2.shape == (3, n)
        assert traj.parameter == (3.0, 2.0, 0.01)
        assert traj.n_fields == 2

    def test_unknown_scheme(self, neumann_8x8):
        p = models.BrusselatorProblem(3.0, 2.0, 0.01)
        state0 = p.initial_state(neumann_8x8.mesh)
        with pytest.raises(ValueError):
            integrators.brusselator_trajectory(
                neumann_8x8, p, state0, integrators.TimeGrid(0.0, 0.1, 1),
                scheme="leapfrog")
