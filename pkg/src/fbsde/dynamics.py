"""Control-affine stochastic systems dx = f dt + G u dt + Sigma dw.

Each system supplies the drift f(x, t), the actuation matrix G(x, t), the
diffusion Sigma(x, t) and a constant factor Gamma with G = Sigma * Gamma.
Noise enters through the control channels: for the mechanical systems
Sigma = noise_scale * G and Gamma = (1/noise_scale) * I, which satisfies the
decomposition exactly with as many noise channels as controls.  The scalar
linear benchmark instead fixes Sigma = sigma and Gamma = b / sigma.

Batched evaluation goes through the autodiff ops so rollouts can
differentiate through the dynamics; the single-state ``*_np`` / ``*_matrix``
methods are the plain-numpy forms used by the reference integrators and the
tests.  Systems are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .costs import CostSpec
from .errors import IntegrationError, ParameterError

__all__ = [
    "ControlAffineSystem",
    "PendulumParams",
    "CartPoleParams",
    "QuadcopterParams",
    "pendulum",
    "cartpole",
    "quadcopter",
    "scalar_linear",
]


class ControlAffineSystem:
    """Base class; concrete systems fill in the dynamics methods."""

    name: str = "system"
    n: int = 0
    m: int = 0
    v: int = 0
    angle_indices: tuple[int, ...] = ()
    state_labels: tuple[str, ...] = ()
    control_labels: tuple[str, ...] = ()

    def __init__(self, x_init, x_goal, noise_scale: float):
        if noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")
        self.x_init = np.asarray(x_init, dtype=np.float64).reshape(-1)
        self.x_goal = np.asarray(x_goal, dtype=np.float64).reshape(-1)
        self.noise_scale = float(noise_scale)

    # --- batched, differentiable ------------------------------------------------

    def drift(self, x: ad.Tensor, t: float) -> ad.Tensor:
        """f(x, t) for a batch of states, shape (M, n)."""
        raise NotImplementedError

    def apply_g(self, x: ad.Tensor, w: ad.Tensor) -> ad.Tensor:
        """Row-wise G(x, t) w for a batch of control-space vectors (M, m)."""
        raise NotImplementedError

    def apply_sigma(self, x: ad.Tensor, q: ad.Tensor) -> ad.Tensor:
        """Row-wise Sigma(x, t) q for a batch of noise-space vectors (M, v)."""
        return ad.scale(self.apply_g(x, q), self.noise_scale)

    # --- single state, plain numpy ----------------------------------------------

    def drift_np(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        out = self.drift(ad.constant(np.asarray(x, dtype=np.float64).reshape(1, -1)), t)
        return out.value[0].copy()

    def g_matrix(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def sigma_matrix(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.noise_scale * self.g_matrix(x, t)

    def gamma(self) -> np.ndarray:
        """Constant decomposition factor with G = Sigma * Gamma, shape (v, m)."""
        return np.eye(self.m) / self.noise_scale

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, m={self.m}, v={self.v})"


# ---------------------------------------------------------------------------
# pendulum


@dataclass(frozen=True)
class PendulumParams:
    """Point-mass pendulum on a rigid massless rod with viscous damping."""

    mass: float = 1.0
    length: float = 1.0
    damping: float = 0.1
    gravity: float = 9.81
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.mass <= 0 or self.length <= 0 or self.gravity <= 0:
            raise ParameterError("mass, length and gravity must be positive")
        if self.damping < 0:
            raise ParameterError("damping must be non-negative")
        if self.noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")


class _Pendulum(ControlAffineSystem):
    name = "pendulum"
    n = 2
    m = 1
    v = 1
    angle_indices = (0,)
    state_labels = ("angle", "rate")
    control_labels = ("torque",)

    def __init__(self, params: PendulumParams):
        super().__init__([0.0, 0.0], [np.pi, 0.0], params.noise_scale)
        self.params = params
        p = params
        self._inv_inertia = 1.0 / (p.mass * p.length * p.length)
        self._grav_coeff = p.gravity / p.length
        self._damp_coeff = p.damping * self._inv_inertia

    def drift(self, x, t):
        theta = ad.columns(x, 0, 1)
        rate = ad.columns(x, 1, 2)
        accel = ad.sub(ad.scale(ad.sin(theta), -self._grav_coeff),
                       ad.scale(rate, self._damp_coeff))
        return ad.hcat([rate, accel])

    def apply_g(self, x, w):
        zero = ad.constant(np.zeros((w.value.shape[0], 1)))
        return ad.hcat([zero, ad.scale(w, self._inv_inertia)])

    def g_matrix(self, x, t=0.0):
        return np.array([[0.0], [self._inv_inertia]])


def pendulum(params: PendulumParams = PendulumParams()) -> ControlAffineSystem:
    """Torque-actuated pendulum; state (angle, rate), hanging start, upright goal.

    inertia * rate' = u - mass*gravity*length*sin(angle) - damping*rate,
    with inertia = mass*length^2.
    """
    return _Pendulum(params)


# ---------------------------------------------------------------------------
# cart-pole


@dataclass(frozen=True)
class CartPoleParams:
    """Nondimensionalized cart-pole; only the actuation-noise scale is free."""

    noise_scale: float = 1.0

    def __post_init__(self):
        if self.noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")


class _CartPole(ControlAffineSystem):
    name = "cartpole"
    n = 4
    m = 1
    v = 1
    angle_indices = (1,)
    state_labels = ("position", "angle", "velocity", "angular_rate")
    control_labels = ("force",)

    # Implicit equations of motion (pole hanging at angle 0):
    #   2 x'' + th'' cos th - th'^2 sin th = u
    #   x'' cos th + th'' + sin th = 0
    # Solved for the accelerations (2 - cos^2 th >= 1, never singular):
    #   x''  = (u + sin th cos th + th'^2 sin th) / (2 - cos^2 th)
    #   th'' = -x'' cos th - sin th

    def __init__(self, params: CartPoleParams):
        super().__init__(np.zeros(4), [0.0, np.pi, 0.0, 0.0], params.noise_scale)
        self.params = params

    def drift(self, x, t):
        vel = ad.columns(x, 2, 3)
        theta = ad.columns(x, 1, 2)
        omega = ad.columns(x, 3, 4)
        s, c = ad.sin(theta), ad.cos(theta)
        inv_den = ad.reciprocal(ad.sub(2.0, ad.square(c)))
        cart_acc = ad.mul(ad.add(ad.mul(s, c), ad.mul(ad.square(omega), s)), inv_den)
        pole_acc = ad.sub(ad.neg(ad.mul(cart_acc, c)), s)
        return ad.hcat([vel, omega, cart_acc, pole_acc])

    def apply_g(self, x, w):
        theta = ad.columns(x, 1, 2)
        c = ad.cos(theta)
        inv_den = ad.reciprocal(ad.sub(2.0, ad.square(c)))
        cart = ad.mul(w, inv_den)
        pole = ad.neg(ad.mul(cart, c))
        zero = ad.constant(np.zeros((w.value.shape[0], 1)))
        return ad.hcat([zero, zero, cart, pole])

    def g_matrix(self, x, t=0.0):
        c = np.cos(float(x[1]))
        den = 2.0 - c * c
        return np.array([[0.0], [0.0], [1.0 / den], [-c / den]])


def cartpole(params: CartPoleParams = CartPoleParams()) -> ControlAffineSystem:
    """Force-actuated cart with a hanging pole; goal is the pole upright.

    State (cart position, pole angle, cart velocity, pole rate).  The cart
    position is part of the state but carries no cost weight by default.
    """
    return _CartPole(params)


# ---------------------------------------------------------------------------
# quadcopter


@dataclass(frozen=True)
class QuadcopterParams:
    """Rigid-body quadrotor with four thrust inputs on a plus-shaped frame."""

    mass: float = 1.0
    arm: float = 0.2
    inertia: tuple[float, float, float] = (0.01, 0.01, 0.02)
    yaw_coeff: float = 0.05
    gravity: float = 9.81
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.mass <= 0 or self.arm <= 0 or self.gravity <= 0:
            raise ParameterError("mass, arm and gravity must be positive")
        if any(i <= 0 for i in self.inertia):
            raise ParameterError("inertia entries must be positive")
        if self.yaw_coeff <= 0:
            raise ParameterError("yaw_coeff must be positive")
        if self.noise_scale <= 0:
            raise ParameterError("noise_scale must be positive")

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust that balances gravity."""
        return self.mass * self.gravity / 4.0


_EULER_SINGULARITY_MARGIN = 1e-6


class _Quadcopter(ControlAffineSystem):
    name = "quadcopter"
    n = 12
    m = 4
    v = 4
    angle_indices = (6, 7, 8)
    state_labels = ("x", "y", "z", "vx", "vy", "vz",
                    "roll", "pitch", "yaw", "p", "q", "r")
    control_labels = ("rotor1", "rotor2", "rotor3", "rotor4")

    # State: world position (x fwd, y right, z up), world velocity, roll/pitch/yaw
    # (Z-Y-X convention), body rates.  Rotors sit on +x, +y, -x, -y arms; the
    # mixing matrix sends the four thrusts to total thrust and body torques.

    def __init__(self, params: QuadcopterParams):
        super().__init__(np.zeros(12), [1.0, 1.0, 1.0] + [0.0] * 9, params.noise_scale)
        self.params = params
        L, k = params.arm, params.yaw_coeff
        ix, iy, iz = params.inertia
        torque_mix = np.array([
            [0.0, L, 0.0, -L],
            [-L, 0.0, L, 0.0],
            [k, -k, k, -k],
        ])
        self._torque_map = np.diag([1.0 / ix, 1.0 / iy, 1.0 / iz]) @ torque_mix  # (3, 4)
        self._gyro = ((iy - iz) / ix, (iz - ix) / iy, (ix - iy) / iz)

    def _check_pitch(self, pitch_values: np.ndarray):
        if np.min(np.abs(np.cos(pitch_values))) < _EULER_SINGULARITY_MARGIN:
            raise IntegrationError("pitch reached +-pi/2: Euler-rate matrix is singular")

    def drift(self, x, t):
        M = x.value.shape[0]
        vel = ad.columns(x, 3, 6)
        roll = ad.columns(x, 6, 7)
        pitch = ad.columns(x, 7, 8)
        self._check_pitch(pitch.value)
        p = ad.columns(x, 9, 10)
        q = ad.columns(x, 10, 11)
        r = ad.columns(x, 11, 12)

        sph, cph = ad.sin(roll), ad.cos(roll)
        sth, cth = ad.sin(pitch), ad.cos(pitch)
        sec = ad.reciprocal(cth)
        tan = ad.mul(sth, sec)

        lateral = ad.add(ad.mul(q, sph), ad.mul(r, cph))
        droll = ad.add(p, ad.mul(lateral, tan))
        dpitch = ad.sub(ad.mul(q, cph), ad.mul(r, sph))
        dyaw = ad.mul(lateral, sec)

        g1, g2, g3 = self._gyro
        dp = ad.scale(ad.mul(q, r), g1)
        dq = ad.scale(ad.mul(p, r), g2)
        dr = ad.scale(ad.mul(p, q), g3)

        zeros2 = ad.constant(np.zeros((M, 2)))
        fall = ad.constant(np.full((M, 1), -self.params.gravity))
        return ad.hcat([vel, zeros2, fall, droll, dpitch, dyaw, dp, dq, dr])

    def _thrust_axis(self, x):
        # body z-axis in world frame for Rz(yaw) Ry(pitch) Rx(roll)
        roll = ad.columns(x, 6, 7)
        pitch = ad.columns(x, 7, 8)
        yaw = ad.columns(x, 8, 9)
        sph, cph = ad.sin(roll), ad.cos(roll)
        sth, cth = ad.sin(pitch), ad.cos(pitch)
        sps, cps = ad.sin(yaw), ad.cos(yaw)
        ax = ad.add(ad.mul(ad.mul(cps, sth), cph), ad.mul(sps, sph))
        ay = ad.sub(ad.mul(ad.mul(sps, sth), cph), ad.mul(cps, sph))
        az = ad.mul(cth, cph)
        return ax, ay, az

    def apply_g(self, x, w):
        M = w.value.shape[0]
        thrust = ad.scale(ad.rowsum(w), 1.0 / self.params.mass)
        ax, ay, az = self._thrust_axis(x)
        acc = ad.hcat([ad.mul(ax, thrust), ad.mul(ay, thrust), ad.mul(az, thrust)])
        torque = ad.matmul(w, ad.constant(self._torque_map.T))
        zeros3 = ad.constant(np.zeros((M, 3)))
        return ad.hcat([zeros3, acc, zeros3, torque])

    def g_matrix(self, x, t=0.0):
        roll, pitch, yaw = float(x[6]), float(x[7]), float(x[8])
        sph, cph = np.sin(roll), np.cos(roll)
        sth, cth = np.sin(pitch), np.cos(pitch)
        sps, cps = np.sin(yaw), np.cos(yaw)
        axis = np.array([
            cps * sth * cph + sps * sph,
            sps * sth * cph - cps * sph,
            cth * cph,
        ])
        G = np.zeros((12, 4))
        G[3:6, :] = np.outer(axis, np.ones(4)) / self.params.mass
        G[9:12, :] = self._torque_map
        return G


def quadcopter(params: QuadcopterParams = QuadcopterParams()) -> ControlAffineSystem:
    """12-state rigid-body quadrotor with four rotor-thrust inputs.

    Goal: hover 1 m up, forward and to the right of the start with zero
    velocity and level attitude.  Pitch of +-pi/2 raises IntegrationError
    (Euler-rate singularity).
    """
    return _Quadcopter(params)


# ---------------------------------------------------------------------------
# scalar linear benchmark


class _ScalarLinear(ControlAffineSystem):
    name = "scalar_linear"
    n = 1
    m = 1
    v = 1
    state_labels = ("x",)
    control_labels = ("u",)

    def __init__(self, a, b, sigma, q, r, g_T, x_init):
        super().__init__([x_init], [0.0], sigma)
        self.a = float(a)
        self.b = float(b)
        self.sigma = float(sigma)
        self.lq = (float(q), float(r), float(g_T))

    def drift(self, x, t):
        return ad.scale(x, self.a)

    def apply_g(self, x, w):
        return ad.scale(w, self.b)

    def apply_sigma(self, x, q):
        return ad.scale(q, self.sigma)

    def g_matrix(self, x, t=0.0):
        return np.array([[self.b]])

    def sigma_matrix(self, x, t=0.0):
        return np.array([[self.sigma]])

    def gamma(self):
        return np.array([[self.b / self.sigma]])

    def lq_cost_spec(self) -> CostSpec:
        """Quadratic costs matching the Riccati convention.

        The Riccati oracle uses 0.5*q*x^2 and 0.5*g_T*x^2 while CostSpec
        quadratic forms carry no 1/2 factor, hence the halving here.
        """
        q, r, g_T = self.lq
        return CostSpec.diagonal([0.5 * q], [0.5 * g_T], [r])


def scalar_linear(a: float, b: float, sigma: float, q: float = 1.0, r: float = 1.0,
                  g_T: float = 1.0, x_init: float = 1.0) -> ControlAffineSystem:
    """dx = (a x + b u) dt + sigma dw with quadratic costs; Gamma = b / sigma.

    The closed-form Riccati solution of this problem validates learned values
    end to end, so it needs a nonzero start (default x_init = 1) to make the
    value gradient at the initial state informative.
    """
    if b == 0.0:
        raise ParameterError("b must be nonzero")
    if sigma <= 0.0:
        raise ParameterError("sigma must be positive")
    if r <= 0.0:
        raise ParameterError("r must be positive")
    return _ScalarLinear(a, b, sigma, q, r, g_T, x_init)
