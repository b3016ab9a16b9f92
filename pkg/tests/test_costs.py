import numpy as np
import pytest

from fbsde import autodiff as ad
from fbsde import costs
from fbsde.costs import CostSpec
from fbsde.dynamics import cartpole, pendulum
from fbsde.errors import DomainError, ParameterError
from fbsde.oracles import finite_diff_grad, quadrature


@pytest.fixture
def pend():
    return pendulum()


@pytest.fixture
def pend_cost():
    return CostSpec.diagonal([1.0, 0.1], [100.0, 10.0], [0.5])


class TestCostSpec:
    def test_rejects_indefinite_R(self):
        with pytest.raises(ParameterError):
            CostSpec.diagonal([1.0], [1.0], [-1.0])

    def test_rejects_negative_Q(self):
        with pytest.raises(ParameterError):
            CostSpec.diagonal([-1.0], [1.0], [1.0])

    def test_constrained_needs_positive_bounds(self):
        with pytest.raises(ParameterError):
            CostSpec.diagonal([1.0], [1.0], [1.0], u_max=[0.0], constrained=True)
        with pytest.raises(ParameterError):
            CostSpec.diagonal([1.0], [1.0], [1.0], constrained=True)


class TestStateCosts:
    def test_zero_at_goal(self, pend, pend_cost):
        x = ad.constant(pend.x_goal.reshape(1, -1))
        assert costs.running_cost(x, pend_cost, pend).item() == 0.0
        assert costs.terminal_cost(x, pend_cost, pend).item() == 0.0

    def test_identity_weights_hand_value(self):
        sys = pendulum()
        spec = CostSpec.diagonal([1.0, 1.0], [1.0, 1.0], [1.0])
        x = ad.constant((sys.x_goal + np.array([1.0, 1.0])).reshape(1, -1))
        assert costs.running_cost(x, spec, sys).item() == pytest.approx(2.0)

    def test_terminal_linear_in_weights(self, pend):
        x = ad.constant([[1.0, -2.0]])
        one = CostSpec.diagonal([1.0, 0.1], [100.0, 10.0], [0.5])
        two = CostSpec.diagonal([1.0, 0.1], [200.0, 20.0], [0.5])
        assert costs.terminal_cost(x, two, pend).item() == \
            pytest.approx(2.0 * costs.terminal_cost(x, one, pend).item())

    def test_angle_wrap_in_cost(self, pend, pend_cost):
        # 2*pi away from the goal costs nothing extra
        near = ad.constant([[np.pi + 0.1, 0.0]])
        far = ad.constant([[np.pi + 0.1 + 2 * np.pi, 0.0]])
        assert costs.running_cost(near, pend_cost, pend).item() == \
            pytest.approx(costs.running_cost(far, pend_cost, pend).item())

    def test_cartpole_cart_position_free(self):
        sys = cartpole()
        spec = CostSpec.diagonal([0.0, 1.0, 0.1, 0.1], [0.0, 100.0, 10.0, 10.0], [0.5])
        at_goal_shifted = ad.constant([[37.0, np.pi, 0.0, 0.0]])
        assert costs.running_cost(at_goal_shifted, spec, sys).item() == 0.0

    def test_costs_nonnegative_on_random_states(self, pend, pend_cost):
        rng = np.random.default_rng(0)
        x = ad.constant(rng.uniform(-10, 10, (500, 2)))
        assert np.all(costs.running_cost(x, pend_cost, pend).value >= 0.0)
        assert np.all(costs.terminal_cost(x, pend_cost, pend).value >= 0.0)


class TestControlLaws:
    def test_zero_gradient_zero_control(self):
        spec = CostSpec.diagonal([1.0], [1.0], [2.0], u_max=[3.0], constrained=True)
        gamma = np.array([[1.0]])
        z = ad.constant([[0.0]])
        assert costs.unconstrained_control(z, gamma, spec).item() == 0.0
        assert costs.constrained_control(z, gamma, spec).item() == 0.0

    def test_scalar_hand_value(self):
        spec = CostSpec.diagonal([1.0], [1.0], [2.0])
        u = costs.unconstrained_control(ad.constant([[4.0]]), np.array([[1.0]]), spec)
        assert u.item() == -2.0

    def test_unconstrained_jacobian_is_constant(self):
        rng = np.random.default_rng(1)
        gamma = rng.uniform(-1, 1, (3, 2))
        spec = CostSpec.diagonal([1.0], [1.0], [2.0, 0.5])
        expected = -(gamma @ spec.r_inv)
        for _ in range(10):
            z0 = rng.uniform(-5, 5, (1, 3))
            tape = ad.Tape()
            z = tape.parameter("z", z0)
            u = costs.unconstrained_control(z, gamma, spec)
            for j in range(2):
                g = tape.gradients(ad.columns(u, j, j + 1))["z"]
                assert np.allclose(g, expected[:, j], atol=1e-12)

    def test_bounds_hold_even_for_huge_gradients(self):
        spec = CostSpec.diagonal([1.0], [1.0], [0.5], u_max=[10.0], constrained=True)
        gamma = np.array([[1.0]])
        for z in (1e6, -1e6, 1e8):
            u = costs.constrained_control(ad.constant([[z]]), gamma, spec).item()
            assert abs(u) < 10.0

    def test_saturation_approaches_bound(self):
        spec = CostSpec.diagonal([1.0], [1.0], [0.5], u_max=[10.0], constrained=True)
        u = costs.constrained_control(ad.constant([[-1e8]]), np.array([[1.0]]), spec)
        assert u.item() > 0.999999 * 10.0

    def test_large_bound_recovers_unconstrained(self):
        # The penalty S has curvature 2c/u_max at zero, so the saturated law
        # reduces to the quadratic-cost law with weight r once c = r*u_max/2
        # and the bound grows; matching at fixed c would diverge with u_max.
        r, u_max = 0.5, 1e6
        spec_u = CostSpec.diagonal([1.0], [1.0], [r])
        spec_c = CostSpec.diagonal([1.0], [1.0], [r * u_max / 2.0],
                                   u_max=[u_max], constrained=True)
        gamma = np.array([[1.0]])
        for z in (-3.0, 0.7, 12.0):
            free = costs.unconstrained_control(ad.constant([[z]]), gamma, spec_u).item()
            capped = costs.constrained_control(ad.constant([[z]]), gamma, spec_c).item()
            assert abs(free - capped) / max(abs(free), 1e-12) < 1e-3


class TestSoftConstraint:
    def test_zero_at_zero(self):
        assert costs.soft_constraint_cost(0.0, 1.3, 10.0) == 0.0

    def test_even(self):
        for u in (0.5, 3.0, 9.9):
            assert costs.soft_constraint_cost(u, 0.7, 10.0) == \
                pytest.approx(costs.soft_constraint_cost(-u, 0.7, 10.0), rel=1e-14)

    def test_domain_error_on_bound(self):
        with pytest.raises(DomainError):
            costs.soft_constraint_cost(10.0, 1.0, 10.0)
        with pytest.raises(DomainError):
            costs.soft_constraint_cost(-11.0, 1.0, 10.0)

    def test_monotone_in_magnitude(self):
        vals = [costs.soft_constraint_cost(u, 1.0, 10.0) for u in np.linspace(0, 9.9, 50)]
        assert np.all(np.diff(vals) > 0)

    def test_closed_form_matches_quadrature_over_range(self):
        # 100 points across (-0.99, 0.99) * u_max, absolute agreement < 1e-9
        c, u_max = 0.8, 10.0
        integrand = lambda v: float(costs.sig_inverse(v / u_max))
        for u in np.linspace(-0.99 * u_max, 0.99 * u_max, 100):
            numeric = c * quadrature(integrand, 0.0, u, tol=1e-11)
            assert abs(numeric - costs.soft_constraint_cost(u, c, u_max)) < 1e-9

    def test_batched_penalty_matches_scalar(self):
        spec = CostSpec.diagonal([1.0], [1.0], [0.7, 1.1], u_max=[10.0, 3.0],
                                 constrained=True)
        U = np.array([[2.0, -1.5], [9.0, 2.9]])
        batched = costs.saturation_penalty(ad.constant(U), spec).value[:, 0]
        for i, row in enumerate(U):
            expected = (costs.soft_constraint_cost(row[0], 0.7, 10.0)
                        + costs.soft_constraint_cost(row[1], 1.1, 3.0))
            assert batched[i] == pytest.approx(expected, rel=1e-12)

    def test_batched_penalty_rejects_infeasible(self):
        spec = CostSpec.diagonal([1.0], [1.0], [1.0], u_max=[1.0], constrained=True)
        with pytest.raises(DomainError):
            costs.saturation_penalty(ad.constant([[1.0]]), spec)


class TestDrivers:
    def test_unconstrained_zero_case(self, pend, pend_cost):
        x = ad.constant(pend.x_goal.reshape(1, -1))
        z = ad.constant([[0.0]])
        h = costs.driver_unconstrained(x, z, pend.gamma(), pend_cost, pend)
        assert h.item() == 0.0

    def test_unconstrained_scalar_hand_value(self, pend):
        # q=0 at the goal, R=1, Gamma=1, z=2 gives h = -0.5 * 4 = -2
        spec = CostSpec.diagonal([1.0, 0.1], [1.0, 1.0], [1.0])
        x = ad.constant(pend.x_goal.reshape(1, -1))
        h = costs.driver_unconstrained(x, ad.constant([[2.0]]), np.array([[1.0]]),
                                       spec, pend)
        assert h.item() == -2.0

    def test_constrained_zero_case(self, pend):
        spec = CostSpec.diagonal([1.0, 0.1], [1.0, 1.0], [0.5], u_max=[10.0],
                                 constrained=True)
        x = ad.constant(pend.x_goal.reshape(1, -1))
        h = costs.driver_constrained(x, ad.constant([[3.7]]), ad.constant([[0.0]]),
                                     pend.gamma(), spec, pend)
        assert h.item() == 0.0


def test_cancellation_identity_unconstrained(pend):
    # -h + z' Gamma u* == -(q + 0.5 u*' R u*) exactly, batched random inputs
    pend = pendulum()
    spec = CostSpec.diagonal([1.0, 0.1], [100.0, 10.0], [0.5])
    gamma = pend.gamma()
    rng = np.random.default_rng(12)
    X = ad.constant(rng.uniform(-5, 5, (2000, 2)))
    Z = ad.constant(rng.uniform(-20, 20, (2000, 1)))
    u = costs.unconstrained_control(Z, gamma, spec)
    h = costs.driver_unconstrained(X, Z, gamma, spec, pend)
    lhs = -h.value + (Z.value * (u.value @ gamma.T)).sum(axis=1, keepdims=True)
    q = costs.running_cost(X, spec, pend).value
    rhs = -(q + 0.5 * np.sum((u.value @ spec.R) * u.value, axis=1, keepdims=True))
    scale = np.maximum(np.abs(rhs), 1.0)
    assert np.max(np.abs(lhs - rhs) / scale) < 1e-12


def test_cancellation_identity_constrained():
    pend = pendulum()
    spec = CostSpec.diagonal([1.0, 0.1], [100.0, 10.0], [0.5], u_max=[10.0],
                             constrained=True)
    gamma = pend.gamma()
    rng = np.random.default_rng(13)
    X = ad.constant(rng.uniform(-5, 5, (2000, 2)))
    Z = ad.constant(rng.uniform(-20, 20, (2000, 1)))
    u = costs.constrained_control(Z, gamma, spec)
    h = costs.driver_constrained(X, Z, u, gamma, spec, pend)
    lhs = -h.value + (Z.value * (u.value @ gamma.T)).sum(axis=1, keepdims=True)
    q = costs.running_cost(X, spec, pend).value
    rhs = -(q + costs.saturation_penalty(u, spec).value)
    scale = np.maximum(np.abs(rhs), 1.0)
    assert np.max(np.abs(lhs - rhs) / scale) < 1e-12


def test_driver_gradients_match_finite_differences():
    pend = pendulum()
    spec = CostSpec.diagonal([1.0, 0.1], [100.0, 10.0], [0.5], u_max=[10.0],
                             constrained=True)
    gamma = pend.gamma()
    z0 = np.array([[1.3]])

    def constrained_scalar(z_arr):
        z = ad.constant(z_arr)
        u = costs.constrained_control(z, gamma, spec)
        x = ad.constant([[0.4, -0.2]])
        return costs.driver_constrained(x, z, u, gamma, spec, pend).item()

    tape = ad.Tape()
    z = tape.parameter("z", z0)
    u = costs.constrained_control(z, gamma, spec)
    h = costs.driver_constrained(ad.constant([[0.4, -0.2]]), z, u, gamma, spec, pend)
    g = tape.gradients(h)["z"]
    f = finite_diff_grad(constrained_scalar, z0.copy())
    assert np.all(np.abs(g - f) <= 1e-8 + 1e-5 * np.abs(f))
