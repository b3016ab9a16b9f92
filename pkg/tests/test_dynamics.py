import numpy as np
import pytest

from fbsde import autodiff as ad
from fbsde.dynamics import (CartPoleParams, PendulumParams, QuadcopterParams,
                            cartpole, pendulum, quadcopter, scalar_linear)
from fbsde.errors import IntegrationError, ParameterError

ALL_SYSTEMS = [
    pendulum(),
    cartpole(),
    quadcopter(),
    scalar_linear(0.2, 1.0, 0.5),
]


def random_states(system, count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2.0, 2.0, (count, system.n))


class TestPendulum:
    def test_equilibrium_at_rest(self):
        sys = pendulum()
        assert np.allclose(sys.drift_np(np.zeros(2)), 0.0)

    def test_horizontal_acceleration(self):
        # frictionless unit pendulum held horizontal: rate' = -g/l
        sys = pendulum(PendulumParams(mass=1.0, length=1.0, damping=0.0))
        f = sys.drift_np(np.array([np.pi / 2, 0.0]))
        assert f[0] == 0.0
        assert f[1] == pytest.approx(-9.81)

    def test_start_and_goal(self):
        sys = pendulum()
        assert np.array_equal(sys.x_init, [0.0, 0.0])
        assert np.array_equal(sys.x_goal, [np.pi, 0.0])

    def test_invalid_params(self):
        with pytest.raises(ParameterError):
            PendulumParams(mass=0.0)
        with pytest.raises(ParameterError):
            PendulumParams(length=-1.0)


class TestCartPole:
    def test_equilibrium(self):
        sys = cartpole()
        f = sys.drift_np(np.zeros(4))
        assert np.allclose(f, 0.0)

    def test_accelerations_satisfy_implicit_equations(self):
        # plug the solved accelerations back into the two implicit equations
        sys = cartpole()
        rng = np.random.default_rng(4)
        for _ in range(200):
            x = rng.uniform(-3, 3, 4)
            u = rng.uniform(-10, 10)
            xdd, tdd = (sys.drift_np(x) + sys.g_matrix(x)[:, 0] * u)[2:]
            th, om = x[1], x[3]
            r1 = 2 * xdd + tdd * np.cos(th) - om**2 * np.sin(th) - u
            r2 = xdd * np.cos(th) + tdd + np.sin(th)
            assert abs(r1) < 1e-12 and abs(r2) < 1e-12

    def test_goal_is_pole_up_cart_free(self):
        sys = cartpole()
        assert np.array_equal(sys.x_goal, [0.0, np.pi, 0.0, 0.0])
        assert sys.angle_indices == (1,)


class TestQuadcopter:
    def test_hover_equilibrium(self):
        sys = quadcopter()
        hover = np.full(4, sys.params.hover_thrust)
        rate = sys.drift_np(np.zeros(12)) + sys.g_matrix(np.zeros(12)) @ hover
        assert np.allclose(rate, 0.0, atol=1e-12)

    def test_free_fall(self):
        sys = quadcopter()
        f = sys.drift_np(np.zeros(12))
        assert f[5] == pytest.approx(-sys.params.gravity)
        assert np.allclose(np.delete(f, 5), 0.0)

    def test_goal_one_meter_up_forward_right(self):
        sys = quadcopter()
        assert np.array_equal(sys.x_goal[:3], [1.0, 1.0, 1.0])
        assert np.all(sys.x_goal[3:] == 0.0)

    def test_pitch_singularity(self):
        sys = quadcopter()
        x = np.zeros(12)
        x[7] = np.pi / 2
        with pytest.raises(IntegrationError):
            sys.drift_np(x)

    def test_mixing_matrix_full_rank(self):
        sys = quadcopter()
        G = sys.g_matrix(np.zeros(12))
        # thrust row plus three torque rows must span all four inputs
        mix = np.vstack([np.ones(4), G[9:12]])
        assert np.linalg.matrix_rank(mix) == 4

    def test_invalid_params(self):
        with pytest.raises(ParameterError):
            QuadcopterParams(inertia=(0.01, -0.01, 0.02))


class TestScalarLinear:
    def test_deterministic_single_integrator(self):
        sys = scalar_linear(0.0, 1.0, 1.0)
        assert sys.drift_np(np.array([3.0]))[0] == 0.0
        assert sys.g_matrix(np.array([3.0]))[0, 0] == 1.0

    def test_gamma_identity(self):
        sys = scalar_linear(0.3, 2.0, 0.5)
        G = sys.g_matrix(np.array([0.0]))
        assert np.allclose(sys.sigma_matrix(np.array([0.0])) @ sys.gamma(), G)

    def test_preconditions(self):
        with pytest.raises(ParameterError):
            scalar_linear(0.0, 0.0, 1.0)
        with pytest.raises(ParameterError):
            scalar_linear(0.0, 1.0, 0.0)
        with pytest.raises(ParameterError):
            scalar_linear(0.0, 1.0, 1.0, r=-1.0)


@pytest.mark.parametrize("system", ALL_SYSTEMS, ids=lambda s: s.name)
def test_decomposition_exact_on_random_states(system):
    # G = Sigma * Gamma to machine precision at 1000 random states
    gamma = system.gamma()
    for x in random_states(system, 1000, seed=1):
        G = system.g_matrix(x)
        residual = np.max(np.abs(G - system.sigma_matrix(x) @ gamma))
        assert residual < 1e-12


@pytest.mark.parametrize("system", ALL_SYSTEMS, ids=lambda s: s.name)
def test_dynamics_evaluations_are_pure(system):
    for x in random_states(system, 10, seed=2):
        a = system.drift_np(x, 0.3)
        b = system.drift_np(x, 0.3)
        assert np.array_equal(a, b)
        assert np.array_equal(system.g_matrix(x, 0.3), system.g_matrix(x, 0.3))


@pytest.mark.parametrize("system,angle", [(pendulum(), 0), (cartpole(), 1)],
                         ids=["pendulum", "cartpole"])
def test_angle_periodicity(system, angle):
    rng = np.random.default_rng(8)
    for _ in range(50):
        x = rng.uniform(-2, 2, system.n)
        shifted = x.copy()
        shifted[angle] += 2 * np.pi
        assert np.allclose(system.drift_np(x), system.drift_np(shifted), atol=1e-12)
        assert np.allclose(system.g_matrix(x), system.g_matrix(shifted), atol=1e-12)


@pytest.mark.parametrize("system", ALL_SYSTEMS, ids=lambda s: s.name)
def test_batched_apply_matches_matrices(system):
    # the differentiable batched path must agree with the explicit matrices
    rng = np.random.default_rng(3)
    X = rng.uniform(-1.2, 1.2, (32, system.n))
    W = rng.uniform(-2, 2, (32, system.m))
    Q = rng.uniform(-2, 2, (32, system.v))
    gw = system.apply_g(ad.constant(X), ad.constant(W)).value
    sq = system.apply_sigma(ad.constant(X), ad.constant(Q)).value
    fx = system.drift(ad.constant(X), 0.0).value
    for i in range(32):
        assert np.allclose(gw[i], system.g_matrix(X[i]) @ W[i], atol=1e-12)
        assert np.allclose(sq[i], system.sigma_matrix(X[i]) @ Q[i], atol=1e-12)
        assert np.allclose(fx[i], system.drift_np(X[i]), atol=1e-12)


@pytest.mark.parametrize("system", ALL_SYSTEMS, ids=lambda s: s.name)
def test_drift_differentiable_through_state(system):
    # gradients through the dynamics themselves (state enters G and f)
    from fbsde.oracles import finite_diff_grad

    rng = np.random.default_rng(6)
    x0 = rng.uniform(-0.8, 0.8, (1, system.n))
    w = rng.uniform(-1, 1, (1, system.m))

    def build(p):
        fx = system.drift(p, 0.0)
        gu = system.apply_g(p, ad.constant(w))
        return ad.sum_squares(ad.add(fx, gu))

    tape = ad.Tape()
    p = tape.parameter("x", x0)
    g = tape.gradients(build(p))["x"]

    def run(xa):
        fx = system.drift_np(xa[0])
        gu = system.g_matrix(xa[0]) @ w[0]
        return float(((fx + gu) ** 2).sum())

    f = finite_diff_grad(run, x0.copy())
    assert np.all(np.abs(g - f) <= 1e-7 + 1e-5 * np.abs(f))
