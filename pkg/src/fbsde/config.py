"""Run configuration: flat INI files with one section per concern.

Every key is validated against a schema; unknown keys and sections are
rejected with the offending line number.  Parsing resolves all defaults, so
the text written back by :meth:`RunConfig.resolved_text` fully reproduces
the run and is echoed into every output directory and checkpoint.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costs import CostSpec
from .dynamics import (CartPoleParams, PendulumParams, QuadcopterParams,
                       cartpole, pendulum, quadcopter, scalar_linear)
from .errors import ConfigError
from .policies import POLICY_KINDS, make_policy
from .propagator import RolloutConfig
from .training import TrainConfig

__all__ = ["RunConfig", "parse_config", "parse_config_text"]

_SYSTEM_KEYS = {
    "pendulum": ("mass", "length", "damping", "gravity", "noise_scale"),
    "cartpole": ("noise_scale",),
    "quadcopter": ("mass", "arm", "inertia_x", "inertia_y", "inertia_z",
                   "yaw_coeff", "gravity", "noise_scale"),
    "scalar_linear": ("a", "b", "noise_scale", "q", "r", "g_t", "init"),
}

_SCHEMA = {
    "system": ("name",),  # plus the per-system keys above
    "cost": ("state_weights", "terminal_weights", "control_weights",
             "constrained", "u_max"),
    "policy": ("kind", "hidden", "output_scale", "y0_init", "z0_init"),
    "rollout": ("horizon", "dt", "steps", "batch"),
    "train": ("iterations", "weight_decay", "learning_rates", "phi_lr_scale",
              "seed", "checkpoint_interval"),
    "output": ("dir",),
}

_STATE_DIM = {"pendulum": 2, "cartpole": 4, "quadcopter": 12, "scalar_linear": 1}
_CONTROL_DIM = {"pendulum": 1, "cartpole": 1, "quadcopter": 4, "scalar_linear": 1}

_DEFAULT_WEIGHTS = {
    # (state_weights, terminal_weights, control_weights, u_max)
    "pendulum": ((1.0, 0.1), (100.0, 10.0), (0.5,), (10.0,)),
    "cartpole": ((0.0, 1.0, 0.05, 0.05), (0.0, 100.0, 10.0, 10.0), (0.5,), (10.0,)),
    "quadcopter": ((1.0, 1.0, 1.0, 0.05, 0.05, 0.05, 0.5, 0.5, 0.5, 0.01, 0.01, 0.01),
                   (50.0, 50.0, 50.0, 5.0, 5.0, 5.0, 10.0, 10.0, 10.0, 1.0, 1.0, 1.0),
                   (0.05, 0.05, 0.05, 0.05), (3.0, 3.0, 3.0, 3.0)),
    "scalar_linear": ((0.5,), (0.5,), (1.0,), (5.0,)),
}

_DEFAULT_HIDDEN = {"pendulum": 16, "cartpole": 16, "quadcopter": 64, "scalar_linear": 16}


def _line_of(text: str, section: str, key: str | None = None) -> str:
    """Best-effort line locator for error messages."""
    pattern = (re.compile(rf"^\s*\[{re.escape(section)}\]")
               if key is None else re.compile(rf"^\s*{re.escape(key)}\s*[=:]"))
    in_section = key is None
    for i, line in enumerate(text.splitlines(), start=1):
        if key is not None and re.match(rf"^\s*\[{re.escape(section)}\]", line):
            in_section = True
            continue
        if key is not None and re.match(r"^\s*\[", line):
            in_section = False
        if in_section and pattern.match(line):
            return f" (line {i})"
    return ""


def _floats(raw: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as err:
        raise ConfigError(f"{what}: expected numbers, got {raw!r}") from err


def _bool(raw: str, what: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {raw!r}")


def _schedule(raw: str) -> tuple[tuple[int, float], ...]:
    entries = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"learning_rates entry {part!r} must look like ITER:RATE")
        start, rate = part.split(":", 1)
        entries.append((int(start), float(rate)))
    if not entries:
        raise ConfigError("learning_rates must contain at least one ITER:RATE entry")
    return tuple(entries)


@dataclass
class RunConfig:
    """Fully resolved run description."""

    system_name: str
    system_params: dict
    state_weights: tuple
    terminal_weights: tuple
    control_weights: tuple
    constrained: bool
    u_max: tuple
    policy_kind: str
    hidden: int
    output_scale: float
    y0_init: tuple
    z0_init: tuple
    horizon: float
    dt: float
    n_steps: int
    batch: int
    iterations: int
    weight_decay: float
    learning_rates: tuple
    phi_lr_scale: float
    seed: int
    checkpoint_interval: int
    out_dir: str

    # --- builders -------------------------------------------------------------

    def build_system(self):
        p = self.system_params
        if self.system_name == "pendulum":
            return pendulum(PendulumParams(**p))
        if self.system_name == "cartpole":
            return cartpole(CartPoleParams(**p))
        if self.system_name == "quadcopter":
            q = dict(p)
            inertia = (q.pop("inertia_x"), q.pop("inertia_y"), q.pop("inertia_z"))
            return quadcopter(QuadcopterParams(inertia=inertia, **q))
        if self.system_name == "scalar_linear":
            return scalar_linear(p["a"], p["b"], p["noise_scale"], q=p["q"], r=p["r"],
                                 g_T=p["g_t"], x_init=p["init"])
        raise ConfigError(f"unknown system {self.system_name!r}")

    def build_cost(self) -> CostSpec:
        return CostSpec.diagonal(self.state_weights, self.terminal_weights,
                                 self.control_weights,
                                 u_max=self.u_max if self.constrained else None,
                                 constrained=self.constrained)

    def build_policy(self, system):
        return make_policy(self.policy_kind, system.n, system.v, self.hidden,
                           self.n_steps, seed=self.seed, y0_range=self.y0_init,
                           z0_range=self.z0_init, output_scale=self.output_scale)

    def build_rollout_config(self) -> RolloutConfig:
        return RolloutConfig(n_steps=self.n_steps, dt=self.dt, batch_size=self.batch,
                             constrained=self.constrained, seed=self.seed)

    def build_train_config(self) -> TrainConfig:
        return TrainConfig(iterations=self.iterations, weight_decay=self.weight_decay,
                           learning_rates=self.learning_rates,
                           phi_lr_scale=self.phi_lr_scale, seed=self.seed,
                           checkpoint_interval=self.checkpoint_interval)

    # --- provenance -----------------------------------------------------------

    def resolved_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["system"] = {"name": self.system_name,
                        **{k: repr(v) for k, v in self.system_params.items()}}
        cp["cost"] = {
            "state_weights": ", ".join(repr(w) for w in self.state_weights),
            "terminal_weights": ", ".join(repr(w) for w in self.terminal_weights),
            "control_weights": ", ".join(repr(w) for w in self.control_weights),
            "constrained": str(self.constrained).lower(),
            "u_max": ", ".join(repr(w) for w in self.u_max),
        }
        cp["policy"] = {
            "kind": self.policy_kind,
            "hidden": str(self.hidden),
            "output_scale": repr(self.output_scale),
            "y0_init": f"{self.y0_init[0]!r}, {self.y0_init[1]!r}",
            "z0_init": f"{self.z0_init[0]!r}, {self.z0_init[1]!r}",
        }
        cp["rollout"] = {
            "horizon": repr(self.horizon),
            "dt": repr(self.dt),
            "steps": str(self.n_steps),
            "batch": str(self.batch),
        }
        cp["train"] = {
            "iterations": str(self.iterations),
            "weight_decay": repr(self.weight_decay),
            "learning_rates": ", ".join(f"{s}:{r!r}" for s, r in self.learning_rates),
            "phi_lr_scale": repr(self.phi_lr_scale),
            "seed": str(self.seed),
            "checkpoint_interval": str(self.checkpoint_interval),
        }
        cp["output"] = {"dir": self.out_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def echo(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        target = out / "config_resolved.ini"
        target.write_text(self.resolved_text())
        return target


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    return parse_config_text(path.read_text(), origin=str(path))


def parse_config_text(text: str, origin: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as err:
        raise ConfigError(f"{origin}: {err}") from err

    def fail(section, key, message):
        raise ConfigError(f"{origin}{_line_of(text, section, key)}: {message}")

    # section / key validation
    for section in cp.sections():
        if section not in _SCHEMA:
            fail(section, None, f"unknown section [{section}]")
    if not cp.has_section("system") or not cp.has_option("system", "name"):
        raise ConfigError(f"{origin}: missing [system] name")
    name = cp.get("system", "name").strip()
    if name not in _SYSTEM_KEYS:
        fail("system", "name", f"unknown system {name!r}; "
             f"expected one of {sorted(_SYSTEM_KEYS)}")
    for section in cp.sections():
        allowed = _SCHEMA[section]
        if section == "system":
            allowed = allowed + _SYSTEM_KEYS[name]
        for key in cp.options(section):
            if key not in allowed:
                fail(section, key, f"unknown key {key!r} in [{section}]")

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        return default

    # system parameters with dataclass defaults
    defaults = {
        "pendulum": PendulumParams(),
        "cartpole": CartPoleParams(),
        "quadcopter": QuadcopterParams(),
    }
    if name == "scalar_linear":
        sys_params = {"a": float(get("system", "a", "0.2")),
                      "b": float(get("system", "b", "1.0")),
                      "noise_scale": float(get("system", "noise_scale", "0.5")),
                      "q": float(get("system", "q", "1.0")),
                      "r": float(get("system", "r", "1.0")),
                      "g_t": float(get("system", "g_t", "1.0")),
                      "init": float(get("system", "init", "1.0"))}
    elif name == "quadcopter":
        d = defaults[name]
        sys_params = {"mass": float(get("system", "mass", d.mass)),
                      "arm": float(get("system", "arm", d.arm)),
                      "inertia_x": float(get("system", "inertia_x", d.inertia[0])),
                      "inertia_y": float(get("system", "inertia_y", d.inertia[1])),
                      "inertia_z": float(get("system", "inertia_z", d.inertia[2])),
                      "yaw_coeff": float(get("system", "yaw_coeff", d.yaw_coeff)),
                      "gravity": float(get("system", "gravity", d.gravity)),
                      "noise_scale": float(get("system", "noise_scale", d.noise_scale))}
    else:
        d = defaults[name]
        sys_params = {key: float(get("system", key, getattr(d, key)))
                      for key in _SYSTEM_KEYS[name]}

    n, m = _STATE_DIM[name], _CONTROL_DIM[name]
    dq, dqt, dr, dumax = _DEFAULT_WEIGHTS[name]
    state_w = _floats(get("cost", "state_weights", ""), "state_weights") \
        if cp.has_option("cost", "state_weights") else dq
    term_w = _floats(get("cost", "terminal_weights", ""), "terminal_weights") \
        if cp.has_option("cost", "terminal_weights") else dqt
    ctrl_w = _floats(get("cost", "control_weights", ""), "control_weights") \
        if cp.has_option("cost", "control_weights") else dr
    constrained = _bool(get("cost", "constrained", "false"), "constrained")
    u_max = _floats(get("cost", "u_max", ""), "u_max") \
        if cp.has_option("cost", "u_max") else dumax
    if len(state_w) != n:
        fail("cost", "state_weights", f"need {n} values for {name}, got {len(state_w)}")
    if len(term_w) != n:
        fail("cost", "terminal_weights", f"need {n} values for {name}, got {len(term_w)}")
    if len(ctrl_w) == 1 and m > 1:
        ctrl_w = ctrl_w * m
    if len(ctrl_w) != m:
        fail("cost", "control_weights", f"need {m} values for {name}, got {len(ctrl_w)}")
    if len(u_max) == 1 and m > 1:
        u_max = u_max * m
    if len(u_max) != m:
        fail("cost", "u_max", f"need {m} values for {name}, got {len(u_max)}")

    kind = get("policy", "kind", "recurrent").strip()
    if kind not in POLICY_KINDS:
        fail("policy", "kind", f"unknown policy kind {kind!r}; expected {POLICY_KINDS}")
    hidden = int(get("policy", "hidden", _DEFAULT_HIDDEN[name]))
    output_scale = float(get("policy", "output_scale", "1.0"))
    y0_init = _floats(get("policy", "y0_init", "0, 1"), "y0_init")
    z0_init = _floats(get("policy", "z0_init", "-0.1, 0.1"), "z0_init")
    if len(y0_init) != 2 or len(z0_init) != 2:
        fail("policy", "y0_init", "init ranges need exactly two values (lo, hi)")

    if not cp.has_option("rollout", "horizon") or not cp.has_option("rollout", "dt"):
        raise ConfigError(f"{origin}: [rollout] must set horizon and dt")
    horizon = float(get("rollout", "horizon"))
    dt = float(get("rollout", "dt"))
    if horizon <= 0 or dt <= 0:
        fail("rollout", "dt", "horizon and dt must be positive")
    n_steps = int(round(horizon / dt))
    if cp.has_option("rollout", "steps"):
        n_steps = int(get("rollout", "steps"))
    if abs(horizon - n_steps * dt) > 1e-9:
        fail("rollout", "steps",
             f"horizon {horizon} is not steps*dt = {n_steps}*{dt} = {n_steps * dt}")
    batch = int(get("rollout", "batch", "128"))

    iterations = int(get("train", "iterations", "3000"))
    weight_decay = float(get("train", "weight_decay", "1e-4"))
    raw_sched = get("train", "learning_rates", None)
    if raw_sched is None:
        drop = max(1, int(0.7 * iterations))
        schedule = ((0, 1e-3), (drop, 1e-4))
    else:
        schedule = _schedule(raw_sched)
    phi_lr_scale = float(get("train", "phi_lr_scale", "1.0"))
    seed = int(get("train", "seed", "0"))
    checkpoint_interval = int(get("train", "checkpoint_interval", "0"))

    out_dir = get("output", "dir", "runs/" + name)

    cfg = RunConfig(
        system_name=name, system_params=sys_params,
        state_weights=tuple(state_w), terminal_weights=tuple(term_w),
        control_weights=tuple(ctrl_w), constrained=constrained, u_max=tuple(u_max),
        policy_kind=kind, hidden=hidden, output_scale=output_scale,
        y0_init=tuple(y0_init), z0_init=tuple(z0_init),
        horizon=horizon, dt=dt, n_steps=n_steps, batch=batch,
        iterations=iterations, weight_decay=weight_decay, learning_rates=schedule,
        phi_lr_scale=phi_lr_scale, seed=seed, checkpoint_interval=checkpoint_interval,
        out_dir=out_dir,
    )
    # surface invalid numbers (negative weights, bad schedule, ...) now, not at run time
    try:
        cfg.build_cost()
        cfg.build_train_config()
        cfg.build_rollout_config()
        cfg.build_system()
    except Exception as err:
        raise ConfigError(f"{origin}: {err}") from err
    return cfg
