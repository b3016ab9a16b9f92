"""Forward propagation of the coupled state / value / gradient processes.

One rollout unrolls M trajectories over N Euler steps, all on the tape:

    u_t   from the feedback law applied to z_t
    y_t+1 = y_t - h(x_t, y_t, z_t, t) dt + z_t' Gamma u_t dt + z_t' dw_t
    x_t+1 = x_t + f(x_t, t) dt + Sigma(x_t, t) (Gamma u_t dt + dw_t)
    z_t+1 = policy(x_t+1, t + 1)            for t + 1 <= N - 1

with (y_0, z_0) taken from the trainable head.  The importance-sampled state
drift steers exploration with the current feedback control, and the value
process is compensated by the matching z' Gamma u term, so the pair targets
the same terminal condition y_N = g(x_N) as the uncontrolled system.

Brownian increments are pre-drawn with one stream per trajectory, keyed
by (seed, stream, trajectory index), which makes every batch reproducible
and lets subsets of a batch be regenerated independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import costs as costs_mod
from .costs import CostSpec
from .errors import IntegrationError, ParameterError, RolloutError

__all__ = [
    "RolloutConfig",
    "RolloutResult",
    "sample_noise",
    "brownian_increments",
    "step",
    "rollout",
    "loss",
]

# abort threshold for any single state component
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class RolloutConfig:
    """Shape of one batch of trajectories."""

    n_steps: int
    dt: float
    batch_size: int
    constrained: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError("n_steps must be at least 1")
        if self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be at least 1")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass
class RolloutResult:
    """Numpy views of a finished batch plus the tape-bound loss inputs."""

    states: np.ndarray            # (M, N+1, n)
    values: np.ndarray            # (M, N+1)
    z_path: np.ndarray            # (M, N, v)
    controls: np.ndarray          # (M, N, m)
    noise: np.ndarray             # (M, N, v)
    terminal_targets: np.ndarray  # (M,)
    y_final: ad.Tensor
    target_final: ad.Tensor
    bound: dict = field(repr=False, default_factory=dict)


def sample_noise(rng: np.random.Generator, v: int, dt: float) -> np.ndarray:
    """One Brownian increment: v i.i.d. Gaussians with variance dt."""
    if dt <= 0:
        raise ParameterError("dt must be positive")
    return rng.standard_normal(v) * np.sqrt(dt)


def brownian_increments(seed: int, batch: int, n_steps: int, v: int, dt: float,
                        stream: tuple[int, ...] = (),
                        trajectory_seeds=None) -> np.ndarray:
    """Increments for a whole batch, shape (batch, n_steps, v).

    Each trajectory draws from its own generator.  By default trajectory i
    uses the spawn key ``stream + (i,)`` under ``seed``; passing explicit
    ``trajectory_seeds`` instead makes trajectories with equal seeds produce
    identical noise.
    """
    out = np.empty((batch, n_steps, v))
    root = np.sqrt(dt)
    for i in range(batch):
        if trajectory_seeds is None:
            ss = np.random.SeedSequence(entropy=seed, spawn_key=stream + (i,))
        else:
            ss = np.random.SeedSequence(entropy=int(trajectory_seeds[i]), spawn_key=stream)
        out[i] = np.random.default_rng(ss).standard_normal((n_steps, v)) * root
    return out


def step(x: ad.Tensor, y: ad.Tensor, z: ad.Tensor, system, cost: CostSpec,
         dt: float, dw: np.ndarray, constrained: bool, t_index: int = 0):
    """One Euler step of the pair; returns (x_next, y_next, u).

    ``dw`` is the (M, v) array of Brownian increments for this step.  The
    value update keeps the driver and the control-compensation term separate
    (their cancellation is checked in tests, not exploited here).
    """
    gamma = system.gamma()
    if constrained:
        u = costs_mod.constrained_control(z, gamma, cost)
        h = costs_mod.driver_constrained(x, z, u, gamma, cost, system)
    else:
        u = costs_mod.unconstrained_control(z, gamma, cost)
        h = costs_mod.driver_unconstrained(x, z, gamma, cost, system)

    dw_c = ad.constant(dw)
    gu = ad.matmul(u, ad.constant(gamma.T))               # rows (Gamma u)'
    y_next = ad.add(ad.sub(y, ad.scale(h, dt)),
                    ad.add(ad.scale(ad.rowsum(ad.mul(z, gu)), dt),
                           ad.rowsum(ad.mul(z, dw_c))))

    t_time = t_index * dt
    try:
        drift = system.drift(x, t_time)
        diffused = system.apply_sigma(x, ad.add(ad.scale(gu, dt), dw_c))
    except IntegrationError as err:
        raise RolloutError(f"dynamics singular at step {t_index}: {err}", t_index) from err
    x_next = ad.add(x, ad.add(ad.scale(drift, dt), diffused))

    xv = x_next.value
    if not np.all(np.isfinite(xv)) or np.max(np.abs(xv)) > DIVERGENCE_LIMIT:
        worst = float(np.max(np.abs(xv[np.isfinite(xv)])) if np.any(np.isfinite(xv)) else np.inf)
        raise RolloutError(
            f"state diverged at step {t_index} (max |component| {worst:.3e})", t_index)
    return x_next, y_next, u


def rollout(policy, system, cost: CostSpec, config: RolloutConfig,
            tape: ad.Tape | None = None, noise: np.ndarray | None = None) -> RolloutResult:
    """Propagate a full batch; differentiable end to end when given a tape."""
    if policy.n != system.n or policy.v != system.v:
        raise ParameterError(
            f"policy dims (n={policy.n}, v={policy.v}) do not match "
            f"system (n={system.n}, v={system.v})")
    if policy.n_steps != config.n_steps:
        raise ParameterError(
            f"policy horizon {policy.n_steps} differs from rollout {config.n_steps}")
    M, N = config.batch_size, config.n_steps
    if noise is None:
        noise = brownian_increments(config.seed, M, N, system.v, config.dt)
    if noise.shape != (M, N, system.v):
        raise ParameterError(f"noise shape {noise.shape} != {(M, N, system.v)}")

    bound = policy.bind(tape)
    y, z = policy.initial_values(bound, M)
    x = ad.constant(np.tile(system.x_init, (M, 1)))
    state = policy.initial_state(M)

    states = np.empty((M, N + 1, system.n))
    values = np.empty((M, N + 1))
    z_path = np.empty((M, N, system.v))
    controls = np.empty((M, N, system.m))
    states[:, 0] = x.value
    values[:, 0] = y.value[:, 0]

    for t in range(N):
        z_path[:, t] = z.value
        x, y, u = step(x, y, z, system, cost, config.dt, noise[:, t],
                       config.constrained, t_index=t)
        controls[:, t] = u.value
        states[:, t + 1] = x.value
        values[:, t + 1] = y.value[:, 0]
        if t + 1 <= N - 1:
            z, state = policy.predict_z(bound, x, t + 1, state)

    target = costs_mod.terminal_cost(x, cost, system)
    return RolloutResult(
        states=states,
        values=values,
        z_path=z_path,
        controls=controls,
        noise=noise,
        terminal_targets=target.value[:, 0].copy(),
        y_final=y,
        target_final=target,
        bound=bound,
    )


def loss(result: RolloutResult, policy, weight_decay: float = 0.0) -> ad.Tensor:
    """Mean squared terminal mismatch plus decay on network weights and biases.

    (1/M) sum_i (g(x_N^i) - y_N^i)^2 + lambda * sum ||W||^2 + ||b||^2;
    the trainable value head is exempt from the decay term.
    """
    M = result.y_final.value.shape[0]
    total = ad.scale(ad.sum_squares(ad.sub(result.target_final, result.y_final)), 1.0 / M)
    if weight_decay > 0.0:
        reg = None
        for name in policy.decay_param_names():
            term = ad.sum_squares(result.bound[name])
            reg = term if reg is None else ad.add(reg, term)
        if reg is not None:
            total = ad.add(total, ad.scale(reg, weight_decay))
    return total
