"""Evaluation of trained policies over fresh noise, plus export helpers.

An evaluation runs the configured number of trials (default 128) without a
tape, then reduces them to per-step means with 95% confidence half-widths
(1.96 * sample std / sqrt(trials)) for every state, value and control
channel, terminal-state statistics (circular means for angle channels), and
a count of hard-bound violations, which must be zero for constrained
policies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import CostSpec
from .errors import ParameterError
from .propagator import RolloutConfig, rollout

__all__ = [
    "EvalReport",
    "evaluate",
    "circular_mean",
    "write_trajectories",
    "export_plot_data",
]

_CONFIDENCE = 1.96  # two-sided 95% normal quantile


def circular_mean(angles: np.ndarray) -> float:
    """Mean direction of a sample of angles, in (-pi, pi]."""
    angles = np.asarray(angles, dtype=np.float64)
    return float(np.arctan2(np.mean(np.sin(angles)), np.mean(np.cos(angles))))


def _half_width(samples: np.ndarray) -> np.ndarray:
    # samples: (trials, ...): normal-approximation CI half-width of the mean
    n = samples.shape[0]
    return _CONFIDENCE * samples.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass
class EvalReport:
    """Per-step statistics over the evaluation trials."""

    system: str
    policy_kind: str
    constrained: bool
    trials: int
    seed: int
    dt: float
    n_steps: int
    state_labels: list[str]
    control_labels: list[str]
    u_max: list | None
    state_mean: np.ndarray       # (N+1, n)
    state_halfwidth: np.ndarray  # (N+1, n)
    value_mean: np.ndarray       # (N+1,)
    value_halfwidth: np.ndarray  # (N+1,)
    control_mean: np.ndarray     # (N, m)
    control_halfwidth: np.ndarray
    terminal: dict = field(default_factory=dict)
    bound_violations: int = 0

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        kwargs = dict(data)
        for key in ("state_mean", "state_halfwidth", "value_mean", "value_halfwidth",
                    "control_mean", "control_halfwidth"):
            kwargs[key] = np.asarray(kwargs[key], dtype=np.float64)
        return cls(**kwargs)

    def save_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    @classmethod
    def load_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate(policy, system, cost: CostSpec, n_steps: int, dt: float,
             trials: int = 128, seed: int = 0):
    """Run fresh rollouts without training; returns (EvalReport, RolloutResult)."""
    if trials < 2:
        raise ParameterError("need at least 2 trials for confidence intervals")
    config = RolloutConfig(n_steps=n_steps, dt=dt, batch_size=trials,
                           constrained=cost.constrained, seed=seed)
    result = rollout(policy, system, cost, config, tape=None)

    violations = 0
    if cost.constrained:
        bounds = cost.u_max.reshape(1, 1, -1)
        violations = int(np.count_nonzero(np.abs(result.controls) >= bounds))

    final = result.states[:, -1, :]
    terminal: dict = {
        "mean": final.mean(axis=0).tolist(),
        "std": final.std(axis=0, ddof=1).tolist(),
        "mean_terminal_cost": float(result.terminal_targets.mean()),
        "circular_mean": {},
    }
    for idx in system.angle_indices:
        terminal["circular_mean"][system.state_labels[idx]] = circular_mean(final[:, idx])

    report = EvalReport(
        system=system.name,
        policy_kind=policy.kind,
        constrained=cost.constrained,
        trials=trials,
        seed=seed,
        dt=dt,
        n_steps=n_steps,
        state_labels=list(system.state_labels),
        control_labels=list(system.control_labels),
        u_max=None if cost.u_max is None else cost.u_max.tolist(),
        state_mean=result.states.mean(axis=0),
        state_halfwidth=_half_width(result.states),
        value_mean=result.values.mean(axis=0),
        value_halfwidth=_half_width(result.values),
        control_mean=result.controls.mean(axis=0),
        control_halfwidth=_half_width(result.controls),
        terminal=terminal,
        bound_violations=violations,
    )
    return report, result


def write_trajectories(path, result, dt: float) -> Path:
    """Raw trajectories as CSV: traj,step,time,x0..x{n-1},y,u0..u{m-1}.

    Controls exist for steps 0..N-1; the terminal row carries nan in the
    control columns.
    """
    path = Path(path)
    M, stages, n = result.states.shape
    m = result.controls.shape[2]
    header = (["traj", "step", "time"]
              + [f"x{i}" for i in range(n)] + ["y"] + [f"u{j}" for j in range(m)])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(M):
            for t in range(stages):
                u = result.controls[i, t] if t < stages - 1 else np.full(m, np.nan)
                cells = [str(i), str(t), repr(t * dt)]
                cells += [repr(v) for v in result.states[i, t]]
                cells.append(repr(result.values[i, t]))
                cells += [repr(v) for v in u]
                fh.write(",".join(cells) + "\n")
    return path


def export_plot_data(report: EvalReport, out_dir) -> list[Path]:
    """One CSV per channel with columns time,mean,lower,upper."""
    out_dir = Path(out_dir)
    if report.trials == 0 or report.state_mean.size == 0:
        print("evaluation report is empty; nothing to export")
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(name, times, mean, hw):
        p = out_dir / f"plot_{name}.csv"
        with open(p, "w") as fh:
            fh.write("time,mean,lower,upper\n")
            for t, mu, w in zip(times, mean, hw):
                fh.write(f"{t!r},{mu!r},{mu - w!r},{mu + w!r}\n")
        written.append(p)

    state_times = np.arange(report.n_steps + 1) * report.dt
    control_times = np.arange(report.n_steps) * report.dt
    for j, label in enumerate(report.state_labels):
        dump(label, state_times, report.state_mean[:, j], report.state_halfwidth[:, j])
    dump("value", state_times, report.value_mean, report.value_halfwidth)
    for j, label in enumerate(report.control_labels):
        dump(label, control_times, report.control_mean[:, j], report.control_halfwidth[:, j])
    return written
