"""Quadratic state costs, feedback laws, and the running drivers.

Two control regimes share one interface.  Unconstrained: quadratic control
cost 0.5 u' R u with minimizer u* = -R^-1 Gamma' z.  Constrained: each
channel pays the integral of the inverse saturating sigmoid,

    S_j(u) = c_j * integral_0^u log((1 + v/u_max_j) / (1 - v/u_max_j)) dv,

whose minimizer is the saturated law u*_j = u_max_j * sig(-(1/c_j) (Gamma' z)_j)
with |u*_j| < u_max_j always.  The driver h is the running term of the value
process: along a rollout the combination -h + z' Gamma u* collapses to minus
the running cost of the applied control, which the tests verify exactly.

All batched functions take (M, k) tensors and run on or off the tape.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .errors import DomainError, ParameterError

__all__ = [
    "CostSpec",
    "sig_inverse",
    "goal_error",
    "running_cost",
    "terminal_cost",
    "unconstrained_control",
    "constrained_control",
    "soft_constraint_cost",
    "saturation_penalty",
    "driver_unconstrained",
    "driver_constrained",
]


def sig_inverse(mu):
    """Inverse of the shifted sigmoid: log((1 + mu) / (1 - mu)) on (-1, 1)."""
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(np.abs(mu) >= 1.0):
        raise DomainError("sig_inverse needs |mu| < 1")
    return np.log1p(mu) - np.log1p(-mu)


class CostSpec:
    """Weights of one optimal-control problem.

    Q and Q_T are positive-semidefinite state weights (diagonal in all
    shipped setups), R is the positive-definite control weight whose diagonal
    plays the role of the per-channel constraint weights c_j when
    ``constrained`` is set, and ``u_max`` holds the per-channel bounds.
    """

    __slots__ = ("Q", "Q_T", "R", "u_max", "constrained", "_r_inv")

    def __init__(self, Q, Q_T, R, u_max=None, constrained: bool = False):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        self.Q_T = np.atleast_2d(np.asarray(Q_T, dtype=np.float64))
        self.R = np.atleast_2d(np.asarray(R, dtype=np.float64))
        self.constrained = bool(constrained)
        self.u_max = None if u_max is None else np.asarray(u_max, dtype=np.float64).reshape(-1)
        self._validate()
        self._r_inv = np.linalg.inv(self.R)

    @classmethod
    def diagonal(cls, q_weights, terminal_weights, control_weights,
                 u_max=None, constrained: bool = False) -> "CostSpec":
        """Build a spec from per-channel weight vectors."""
        return cls(np.diag(np.asarray(q_weights, dtype=np.float64)),
                   np.diag(np.asarray(terminal_weights, dtype=np.float64)),
                   np.diag(np.asarray(control_weights, dtype=np.float64)),
                   u_max=u_max, constrained=constrained)

    def _validate(self):
        for name, mat in (("Q", self.Q), ("Q_T", self.Q_T)):
            if mat.shape[0] != mat.shape[1]:
                raise ParameterError(f"{name} must be square, got {mat.shape}")
            if not np.allclose(mat, mat.T):
                raise ParameterError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ParameterError(f"{name} must be positive semidefinite")
        if self.R.shape[0] != self.R.shape[1]:
            raise ParameterError(f"R must be square, got {self.R.shape}")
        if not np.allclose(self.R, self.R.T):
            raise ParameterError("R must be symmetric")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError as err:
            raise ParameterError("R must be positive definite") from err
        if self.constrained:
            if self.u_max is None:
                raise ParameterError("constrained cost needs u_max")
            if self.u_max.shape[0] != self.R.shape[0]:
                raise ParameterError("u_max length must match the control dimension")
            if np.any(self.u_max <= 0):
                raise ParameterError("u_max entries must be strictly positive")
            offdiag = self.R - np.diag(np.diag(self.R))
            if np.any(offdiag != 0.0):
                raise ParameterError("constrained control needs a diagonal R (weights c_j)")

    @property
    def r_inv(self) -> np.ndarray:
        return self._r_inv

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


# ---------------------------------------------------------------------------
# state costs


def goal_error(x, system) -> ad.Tensor:
    """x - x_goal with angle coordinates wrapped to (-pi, pi]."""
    diff = ad.sub(x, ad.constant(system.x_goal.reshape(1, -1)))
    if system.angle_indices:
        diff = ad.wrap_angles(diff, system.angle_indices)
    return diff


def _quad_form(d: ad.Tensor, W: np.ndarray) -> ad.Tensor:
    return ad.rowsum(ad.mul(ad.matmul(d, ad.constant(W)), d))


def running_cost(x, cost: CostSpec, system) -> ad.Tensor:
    """q(x) = (x - goal)' Q (x - goal), wrapped angles; shape (M, 1)."""
    return _quad_form(goal_error(x, system), cost.Q)


def terminal_cost(x, cost: CostSpec, system) -> ad.Tensor:
    """g(x) = (x - goal)' Q_T (x - goal), wrapped angles; shape (M, 1)."""
    return _quad_form(goal_error(x, system), cost.Q_T)


# ---------------------------------------------------------------------------
# feedback laws


def unconstrained_control(z, gamma: np.ndarray, cost: CostSpec) -> ad.Tensor:
    """u* = -R^-1 Gamma' z, row-wise over the batch."""
    return ad.neg(ad.matmul(z, ad.constant(gamma @ cost.r_inv)))


def constrained_control(z, gamma: np.ndarray, cost: CostSpec) -> ad.Tensor:
    """u*_j = u_max_j * sig(-(1/c_j) (Gamma' z)_j); strictly inside the bounds."""
    if cost.u_max is None:
        raise ParameterError("constrained control needs u_max")
    raw = ad.neg(ad.matmul(z, ad.constant(gamma @ cost.r_inv)))
    return ad.mul(ad.sig(raw), ad.constant(cost.u_max.reshape(1, -1)))


# ---------------------------------------------------------------------------
# saturation penalty


def soft_constraint_cost(u: float, c: float, u_max: float) -> float:
    """Closed form of one channel's saturation penalty S_j(u).

    Antiderivative of c * log((1 + v/u_max)/(1 - v/u_max)):
        S(u) = c * u_max * [(1 + mu) ln(1 + mu) + (1 - mu) ln(1 - mu)],
    with mu = u / u_max; S(0) = 0 and S is even.  The quadrature oracle
    cross-checks this expression in the test suite.
    """
    if u_max <= 0:
        raise ParameterError("u_max must be positive")
    mu = u / u_max
    if abs(mu) >= 1.0:
        raise DomainError(f"|u| = {abs(u)} is outside the open bound ({u_max})")
    return c * u_max * ((1.0 + mu) * math.log1p(mu) + (1.0 - mu) * math.log1p(-mu))


def saturation_penalty(u, cost: CostSpec) -> ad.Tensor:
    """Sum over channels of S_j(u_j) for a batch of controls; shape (M, 1).

    Inputs must be strictly inside the bounds (true by construction when they
    come from :func:`constrained_control`).
    """
    if cost.u_max is None:
        raise ParameterError("saturation penalty needs u_max")
    uv = np.abs(u.value if isinstance(u, ad.Tensor) else np.asarray(u))
    if np.any(uv >= cost.u_max.reshape(1, -1)):
        raise DomainError("control sample on or outside the bound")
    mu = ad.mul(u, ad.constant(1.0 / cost.u_max.reshape(1, -1)))
    up = ad.add(mu, 1.0)
    down = ad.sub(1.0, mu)
    per_channel = ad.add(ad.mul(up, ad.log(up)), ad.mul(down, ad.log(down)))
    weights = (np.diag(cost.R) * cost.u_max).reshape(-1, 1)
    return ad.matmul(per_channel, ad.constant(weights))


# ---------------------------------------------------------------------------
# drivers


def driver_unconstrained(x, z, gamma: np.ndarray, cost: CostSpec, system) -> ad.Tensor:
    """h = q(x) - 0.5 z' Gamma R^-1 Gamma' z; shape (M, 1)."""
    kernel = gamma @ cost.r_inv @ gamma.T
    quad = ad.rowsum(ad.mul(z, ad.matmul(z, ad.constant(kernel))))
    return ad.sub(running_cost(x, cost, system), ad.scale(quad, 0.5))


def driver_constrained(x, z, u, gamma: np.ndarray, cost: CostSpec, system) -> ad.Tensor:
    """h = q(x) + z' Gamma u + sum_j S_j(u_j); shape (M, 1)."""
    coupling = ad.rowsum(ad.mul(z, ad.matmul(u, ad.constant(gamma.T))))
    return ad.add(ad.add(running_cost(x, cost, system), coupling),
                  saturation_penalty(u, cost))
