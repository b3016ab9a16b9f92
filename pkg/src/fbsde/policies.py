"""Trainable approximators of the value-function gradient along a rollout.

Both architectures predict z_t = Sigma' V_x at time steps t = 1 .. N-1; the
value and its gradient at t = 0 are their own trainable head.  The stacked
variant keeps an independent two-hidden-layer tanh network per time step, so
its parameter count grows linearly with the horizon.  The recurrent variant
shares two gated (LSTM) cells plus a linear readout across all steps and
additionally sees normalized time t/N as an input, since a shared network
has no other way to know where in the horizon it is.

Parameters live in a plain ``dict[str, np.ndarray]``.  ``bind`` registers
them on a tape for training, or wraps them as constants for evaluation; all
prediction methods take the bound mapping, so a policy object itself never
holds tape state.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ParameterError

__all__ = ["FCStackPolicy", "LSTMPolicy", "make_policy", "POLICY_KINDS"]

POLICY_KINDS = ("fc-stack", "recurrent")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class _PolicyBase:
    kind: str = ""

    def __init__(self, n: int, v: int, hidden: int, n_steps: int, output_scale: float = 1.0):
        if hidden < 1:
            raise ParameterError("hidden width must be at least 1")
        if n_steps < 1:
            raise ParameterError("horizon must have at least 1 step")
        self.n = int(n)
        self.v = int(v)
        self.hidden = int(hidden)
        self.n_steps = int(n_steps)
        self.output_scale = float(output_scale)
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, seed: int, y0_range=(0.0, 1.0), z0_range=(-0.1, 0.1)):
        """Draw fresh parameters; same seed, same parameters."""
        rng = np.random.default_rng(seed)
        self.params = {
            "phi.y0": rng.uniform(y0_range[0], y0_range[1], size=(1, 1)),
            "phi.z0": rng.uniform(z0_range[0], z0_range[1], size=(1, self.v)),
        }
        self._init_network(rng)
        return self

    def _init_network(self, rng):
        raise NotImplementedError

    def bind(self, tape: ad.Tape | None) -> dict[str, ad.Tensor]:
        """Bound tensors: trainable on a tape, plain constants without one."""
        if tape is None:
            return {name: ad.constant(arr) for name, arr in self.params.items()}
        return {name: tape.parameter(name, arr) for name, arr in self.params.items()}

    def initial_values(self, bound, batch: int) -> tuple[ad.Tensor, ad.Tensor]:
        """(y_0, z_0) broadcast over the batch, differentiable w.r.t. the head."""
        ones = ad.constant(np.ones((batch, 1)))
        return ad.matmul(ones, bound["phi.y0"]), ad.matmul(ones, bound["phi.z0"])

    def initial_state(self, batch: int):
        return None

    def predict_z(self, bound, x: ad.Tensor, t: int, state=None):
        """z at step t in [1, n_steps - 1]; returns (z, carried state)."""
        raise NotImplementedError

    def _check_step(self, t: int):
        if not 1 <= t <= self.n_steps - 1:
            raise ParameterError(f"step index {t} outside [1, {self.n_steps - 1}]")

    def param_count(self) -> int:
        """Total trainable scalars, the value head included."""
        return sum(arr.size for arr in self.params.values())

    def decay_param_names(self) -> tuple[str, ...]:
        """Names subject to weight decay: layer weights and biases, not the head."""
        return tuple(name for name in self.params if not name.startswith("phi."))


class FCStackPolicy(_PolicyBase):
    """One independent network per time step: n -> H -> H -> v, tanh hidden."""

    kind = "fc-stack"

    def _init_network(self, rng):
        n, H, v = self.n, self.hidden, self.v
        for t in range(1, self.n_steps):
            for tag, (rows, cols) in (("0", (n, H)), ("1", (H, H)), ("2", (H, v))):
                self.params[f"t{t:03d}.W{tag}"] = _uniform(rng, (rows, cols), rows)
                self.params[f"t{t:03d}.b{tag}"] = _uniform(rng, (1, cols), rows)

    def predict_z(self, bound, x, t, state=None):
        self._check_step(t)
        key = f"t{t:03d}"
        h = ad.tanh(ad.add(ad.matmul(x, bound[f"{key}.W0"]), bound[f"{key}.b0"]))
        h = ad.tanh(ad.add(ad.matmul(h, bound[f"{key}.W1"]), bound[f"{key}.b1"]))
        z = ad.add(ad.matmul(h, bound[f"{key}.W2"]), bound[f"{key}.b2"])
        if self.output_scale != 1.0:
            z = ad.scale(z, self.output_scale)
        return z, None


class LSTMPolicy(_PolicyBase):
    """Two stacked gated recurrent cells shared across time, linear readout.

    Gate blocks are packed (input, forget, candidate, output) into single
    (in, 4H) matrices.  The forget-gate bias starts at 1 so early training
    keeps its memory; hidden and cell states start at zero for every
    trajectory and are carried across the horizon.
    """

    kind = "recurrent"
    layers = 2

    def _init_network(self, rng):
        H, v = self.hidden, self.v
        d = self.n + 1  # state plus normalized time
        for layer in range(self.layers):
            fan = d if layer == 0 else H
            self.params[f"l{layer}.Wx"] = _uniform(rng, (fan, 4 * H), fan)
            self.params[f"l{layer}.Wh"] = _uniform(rng, (H, 4 * H), H)
            b = _uniform(rng, (1, 4 * H), fan)
            b[0, H:2 * H] = 1.0
            self.params[f"l{layer}.b"] = b
        self.params["out.W"] = _uniform(rng, (H, v), H)
        self.params["out.b"] = _uniform(rng, (1, v), H)

    def initial_state(self, batch: int):
        zeros = np.zeros((batch, self.hidden))
        return [(ad.constant(zeros), ad.constant(zeros)) for _ in range(self.layers)]

    def predict_z(self, bound, x, t, state=None):
        self._check_step(t)
        if state is None:
            raise ParameterError("recurrent policy needs its carried state")
        H = self.hidden
        time_col = ad.constant(np.full((x.value.shape[0], 1), t / self.n_steps))
        inp = ad.hcat([x, time_col])
        new_state = []
        for layer, (h_prev, c_prev) in enumerate(state):
            gates = ad.add(ad.add(ad.matmul(inp, bound[f"l{layer}.Wx"]),
                                  ad.matmul(h_prev, bound[f"l{layer}.Wh"])),
                           bound[f"l{layer}.b"])
            i = ad.sigmoid(ad.columns(gates, 0, H))
            f = ad.sigmoid(ad.columns(gates, H, 2 * H))
            g = ad.tanh(ad.columns(gates, 2 * H, 3 * H))
            o = ad.sigmoid(ad.columns(gates, 3 * H, 4 * H))
            c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
            h = ad.mul(o, ad.tanh(c))
            new_state.append((h, c))
            inp = h
        z = ad.add(ad.matmul(inp, bound["out.W"]), bound["out.b"])
        if self.output_scale != 1.0:
            z = ad.scale(z, self.output_scale)
        return z, new_state


def make_policy(kind: str, n: int, v: int, hidden: int, n_steps: int, seed: int = 0,
                y0_range=(0.0, 1.0), z0_range=(-0.1, 0.1), output_scale: float = 1.0):
    """Build and initialize a policy of the given kind."""
    if kind == "fc-stack":
        policy = FCStackPolicy(n, v, hidden, n_steps, output_scale)
    elif kind == "recurrent":
        policy = LSTMPolicy(n, v, hidden, n_steps, output_scale)
    else:
        raise ParameterError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
    return policy.init_params(seed, y0_range=y0_range, z0_range=z0_range)
