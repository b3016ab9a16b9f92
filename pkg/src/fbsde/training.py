"""Outer training loop: rollout, loss, gradients, Adam, bookkeeping.

The value head and the network weights are updated by two separate Adam
instances so the head can run at its own learning rate -- it has to travel
from its random initialization to the actual cost-to-go scale, which is
usually far longer a journey than any single weight makes.  Both share the
piecewise-constant schedule; the head rate is the scheduled rate times
``phi_lr_scale``.

Each iteration draws fresh Brownian increments from a stream keyed by
(seed, iteration, trajectory), so two runs with the same seed produce
bit-identical parameter trajectories and metrics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .autodiff import Tape
from .costs import CostSpec
from .errors import ParameterError, RolloutError, TrainingDiverged
from .propagator import RolloutConfig, brownian_increments, loss as rollout_loss, rollout

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "IterationRecord",
    "TrainResult",
    "train",
    "METRICS_FIELDS",
]

METRICS_FIELDS = ("iter", "loss", "y0", "mean_terminal_cost", "grad_norm", "lr", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one run."""

    iterations: int
    weight_decay: float = 1e-4
    # piecewise-constant (start_iteration, rate); None means the default
    # 1e-3 with a drop to 1e-4 after 70% of the iterations
    learning_rates: tuple[tuple[int, float], ...] | None = None
    phi_lr_scale: float = 1.0
    seed: int = 0
    checkpoint_interval: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be at least 1")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be non-negative")
        if self.phi_lr_scale <= 0:
            raise ParameterError("phi_lr_scale must be positive")
        if self.learning_rates is not None:
            if not self.learning_rates or self.learning_rates[0][0] != 0:
                raise ParameterError("learning-rate schedule must start at iteration 0")
            if any(rate <= 0 for _, rate in self.learning_rates):
                raise ParameterError("learning rates must be positive")
            starts = [start for start, _ in self.learning_rates]
            if starts != sorted(starts):
                raise ParameterError("learning-rate schedule must be sorted")

    def schedule(self) -> tuple[tuple[int, float], ...]:
        if self.learning_rates is not None:
            return self.learning_rates
        drop = max(1, int(0.7 * self.iterations))
        return ((0, 1e-3), (drop, 1e-4))


def lr_at(schedule, iteration: int) -> float:
    rate = schedule[0][1]
    for start, value in schedule:
        if iteration >= start:
            rate = value
        else:
            break
    return rate


class AdamState:
    """First/second moment accumulators for one parameter group."""

    def __init__(self, params: dict[str, np.ndarray],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, rate: float):
    """Standard bias-corrected Adam update, in place; returns (params, state)."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ParameterError(f"gradients missing for parameters: {missing}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ParameterError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    y0: float
    mean_terminal_cost: float
    grad_norm: float
    lr: float
    wall_ms: float

    def csv_line(self) -> str:
        return (f"{self.iteration},{self.loss!r},{self.y0!r},{self.mean_terminal_cost!r},"
                f"{self.grad_norm!r},{self.lr!r},{self.wall_ms:.3f}")


@dataclass
class TrainResult:
    policy: object
    history: list[IterationRecord] = field(default_factory=list)


def train(system, cost: CostSpec, policy, rollout_config: RolloutConfig,
          train_config: TrainConfig, out_dir: str | Path | None = None,
          verbose: bool = False) -> TrainResult:
    """Run the full optimization; the policy is updated in place.

    With ``out_dir`` set, appends one metrics line per iteration to
    ``metrics.csv`` and writes periodic plus final checkpoints.  A diverged
    rollout saves the current parameters and raises TrainingDiverged.
    """
    schedule = train_config.schedule()
    phi_params = {k: v for k, v in policy.params.items() if k.startswith("phi.")}
    net_params = {k: v for k, v in policy.params.items() if not k.startswith("phi.")}
    phi_state = AdamState(phi_params)
    net_state = AdamState(net_params)

    out_path = None
    metrics_file = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        metrics_file = open(out_path / "metrics.csv", "w")
        metrics_file.write(",".join(METRICS_FIELDS) + "\n")

    history: list[IterationRecord] = []
    report_every = max(1, train_config.iterations // 20)
    try:
        for k in range(1, train_config.iterations + 1):
            started = time.perf_counter()
            rate = lr_at(schedule, k)
            noise = brownian_increments(train_config.seed, rollout_config.batch_size,
                                        rollout_config.n_steps, system.v,
                                        rollout_config.dt, stream=(k,))
            tape = Tape()
            try:
                result = rollout(policy, system, cost, rollout_config, tape, noise)
            except RolloutError as err:
                if out_path is not None:
                    ckpt.save(out_path / "checkpoint_diverged.npz", policy,
                              extra={"iteration": k, "failed_step": err.step})
                raise TrainingDiverged(
                    f"iteration {k}: {err} (seed {train_config.seed})") from err
            total = rollout_loss(result, policy, train_config.weight_decay)
            grads = tape.gradients(total)

            adam_step(net_params, grads, net_state, rate)
            adam_step(phi_params, grads, phi_state, rate * train_config.phi_lr_scale)

            grad_norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
            record = IterationRecord(
                iteration=k,
                loss=total.item(),
                y0=float(policy.params["phi.y0"][0, 0]),
                mean_terminal_cost=float(result.terminal_targets.mean()),
                grad_norm=grad_norm,
                lr=rate,
                wall_ms=(time.perf_counter() - started) * 1e3,
            )
            history.append(record)
            if metrics_file is not None:
                metrics_file.write(record.csv_line() + "\n")
                metrics_file.flush()
            if out_path is not None and train_config.checkpoint_interval > 0 \
                    and k % train_config.checkpoint_interval == 0:
                ckpt.save(out_path / f"checkpoint_{k:06d}.npz", policy,
                          extra={"iteration": k})
            if verbose and (k % report_every == 0 or k == 1):
                print(f"  iter {k:5d}  loss {record.loss:12.4f}  y0 {record.y0:9.3f}  "
                      f"terminal cost {record.mean_terminal_cost:10.3f}  lr {rate:g}")
    finally:
        if metrics_file is not None:
            metrics_file.close()
    if out_path is not None:
        ckpt.save(out_path / "checkpoint_final.npz", policy,
                  extra={"iteration": train_config.iterations})
    return TrainResult(policy=policy, history=history)
