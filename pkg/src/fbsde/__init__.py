"""Feedback-policy learning for control-affine stochastic systems.

The solver trains neural approximations of a value function's gradient so
that the coupled forward (state) and backward (value) stochastic processes
reproduce the terminal cost, which makes the induced feedback law optimal
for the underlying Hamilton-Jacobi-Bellman problem.  Everything runs on a
small numpy-backed reverse-mode autodiff tape; no deep-learning framework
is required.
"""

from .autodiff import Tape, Tensor, constant, gradients
from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .config import RunConfig, parse_config, parse_config_text
from .costs import CostSpec
from .dynamics import (CartPoleParams, ControlAffineSystem, PendulumParams,
                       QuadcopterParams, cartpole, pendulum, quadcopter,
                       scalar_linear)
from .evaluation import EvalReport, evaluate, export_plot_data, write_trajectories
from .oracles import finite_diff_grad, quadrature, rk4_integrate, solve_riccati
from .policies import FCStackPolicy, LSTMPolicy, make_policy
from .propagator import RolloutConfig, RolloutResult, brownian_increments, rollout
from .training import AdamState, TrainConfig, TrainResult, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "Tape", "Tensor", "constant", "gradients",
    "CostSpec",
    "ControlAffineSystem", "PendulumParams", "CartPoleParams", "QuadcopterParams",
    "pendulum", "cartpole", "quadcopter", "scalar_linear",
    "FCStackPolicy", "LSTMPolicy", "make_policy",
    "RolloutConfig", "RolloutResult", "brownian_increments", "rollout",
    "TrainConfig", "TrainResult", "AdamState", "adam_step", "train",
    "EvalReport", "evaluate", "export_plot_data", "write_trajectories",
    "finite_diff_grad", "quadrature", "rk4_integrate", "solve_riccati",
    "RunConfig", "parse_config", "parse_config_text",
    "save_checkpoint", "load_checkpoint",
]
