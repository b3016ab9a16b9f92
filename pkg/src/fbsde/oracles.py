"""Independent reference implementations used to validate the solver.

Nothing here touches the tape machinery: finite differences check the
reverse-mode gradients, fixed-step RK4 checks the Euler drift, adaptive
quadrature checks the closed-form control penalty, and the scalar Riccati
equation supplies exact value functions for linear-quadratic problems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import ParameterError, ResolutionError, ToleranceError

__all__ = [
    "finite_diff_grad",
    "quadrature",
    "rk4_integrate",
    "RiccatiSolution",
    "solve_riccati",
]


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ParameterError("finite differences need h > 0")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = f(x)
        xf[i] = orig - h
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def quadrature(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    """Adaptive quadrature of ``f`` on [lo, hi] to absolute tolerance ``tol``."""
    with warnings.catch_warnings():
        # non-convergence is reported through the error estimate below
        warnings.simplefilter("ignore", IntegrationWarning)
        value, err = quad(f, lo, hi, epsabs=0.1 * tol, epsrel=0.0, limit=200)
    if err > tol:
        raise ToleranceError(f"quadrature error estimate {err:.3e} exceeds tol {tol:.3e}")
    return value


def rk4_integrate(system, control: Callable[[float], np.ndarray], x0, T: float, steps: int) -> np.ndarray:
    """Classical fixed-step RK4 for the deterministic part dx = (f + G u) dt.

    Returns the (steps + 1, n) trajectory including the initial state.  The
    diffusion is ignored; this is the high-order reference for the Euler
    scheme used in rollouts.
    """
    x = np.asarray(x0, dtype=np.float64).reshape(-1)
    dt = T / steps
    out = np.empty((steps + 1, x.size))
    out[0] = x

    def rhs(xi, t):
        u = np.asarray(control(t), dtype=np.float64).reshape(-1)
        return system.drift_np(xi, t) + system.g_matrix(xi, t) @ u

    for k in range(steps):
        t = k * dt
        k1 = rhs(x, t)
        k2 = rhs(x + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(x + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(x + dt * k3, t + dt)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


@dataclass(frozen=True)
class RiccatiSolution:
    """Tabulated solution of the scalar Riccati problem on a uniform grid.

    The value function of the associated linear-quadratic problem is
    V(x, t) = 0.5 * P(t) * x^2 + s(t), with gradient V_x = P(t) * x.  s(t)
    carries the correction that the process noise adds to the cost-to-go.
    """

    t: np.ndarray
    P: np.ndarray
    s: np.ndarray
    grid: int

    def P_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.P))

    def s_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.s))

    def value(self, x: float, t: float) -> float:
        return 0.5 * self.P_at(t) * x * x + self.s_at(t)

    def value_gradient(self, x: float, t: float) -> float:
        return self.P_at(t) * x


def _riccati_sweep(a, b, sigma, q, r, g_T, T, n_steps):
    # integrate backward from t = T with RK4 on the coupled pair
    #   -dP/dt = 2 a P + q - (b^2 / r) P^2      P(T) = g_T
    #   -ds/dt = 0.5 sigma^2 P                  s(T) = 0
    dt = T / n_steps
    P = np.empty(n_steps + 1)
    s = np.empty(n_steps + 1)
    P[n_steps] = g_T
    s[n_steps] = 0.0

    def rhs(y):
        p, _ = y
        return np.array([-(2.0 * a * p + q - (b * b / r) * p * p), -0.5 * sigma * sigma * p])

    y = np.array([g_T, 0.0])
    h = -dt
    for k in range(n_steps, 0, -1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        P[k - 1], s[k - 1] = y
    return P, s


def solve_riccati(a: float, b: float, sigma: float, q: float, r: float, g_T: float,
                  T: float, grid: int = 2001, tol: float = 1e-8) -> RiccatiSolution:
    """Solve the scalar Riccati problem backward from P(T) = g_T.

    Cost convention: running cost 0.5*q*x^2 + 0.5*r*u^2, terminal cost
    0.5*g_T*x^2, dynamics dx = (a x + b u) dt + sigma dw.  A step-doubling
    estimate guards the grid: if halving the step changes P(0) or s(0) by
    more than ``tol`` the grid is rejected.
    """
    if r <= 0:
        raise ParameterError("control weight r must be positive")
    if grid < 2:
        raise ParameterError("grid must have at least 2 points")
    n = grid - 1
    P, s = _riccati_sweep(a, b, sigma, q, r, g_T, T, n)
    P2, s2 = _riccati_sweep(a, b, sigma, q, r, g_T, T, 2 * n)
    err = max(abs(P[0] - P2[0]), abs(s[0] - s2[0]))
    if err > tol:
        raise ResolutionError(
            f"Riccati grid with {grid} points too coarse: step-doubling error {err:.3e} > {tol:.3e}"
        )
    t = np.linspace(0.0, T, grid)
    return RiccatiSolution(t=t, P=P, s=s, grid=grid)
