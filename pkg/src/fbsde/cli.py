"""Command-line entry point: train, eval, export-plots, param-count.

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 I/O or checkpoint error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .config import parse_config, parse_config_text
from .errors import CheckpointError, ConfigError, TrainingDiverged
from .evaluation import EvalReport, evaluate, export_plot_data, write_trajectories
from .policies import make_policy
from .training import train


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    system = cfg.build_system()
    cost = cfg.build_cost()
    policy = cfg.build_policy(system)
    out_dir = Path(args.out or cfg.out_dir)
    cfg.echo(out_dir)
    print(f"training {cfg.policy_kind} policy on {cfg.system_name} "
          f"(N={cfg.n_steps}, batch={cfg.batch}, iterations={cfg.iterations}, "
          f"constrained={cfg.constrained})")
    result = train(system, cost, policy, cfg.build_rollout_config(),
                   cfg.build_train_config(), out_dir=out_dir, verbose=not args.quiet)
    # refresh the final checkpoint with the resolved config for self-contained eval
    ckpt.save(out_dir / "checkpoint_final.npz", policy,
              config_text=cfg.resolved_text(),
              extra={"iteration": cfg.iterations})
    last = result.history[-1]
    print(f"done: loss {last.loss:.6g}, y0 {last.y0:.6g}, "
          f"mean terminal cost {last.mean_terminal_cost:.6g}")
    print(f"artifacts in {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    policy, meta = ckpt.load(args.checkpoint)
    if not meta.get("config"):
        raise CheckpointError(
            f"{args.checkpoint} carries no configuration; re-save it from training")
    cfg = parse_config_text(meta["config"], origin=f"{args.checkpoint}:config")
    system = cfg.build_system()
    cost = cfg.build_cost()
    out_dir = Path(args.out or Path(args.checkpoint).parent / "eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    report, result = evaluate(policy, system, cost, cfg.n_steps, cfg.dt,
                              trials=args.trials, seed=args.seed)
    report_path = report.save_json(out_dir / "eval_report.json")
    traj_path = write_trajectories(out_dir / "trajectories.csv", result, cfg.dt)
    final = report.terminal["mean"]
    print(f"evaluated {args.trials} trials of {cfg.system_name} "
          f"({cfg.policy_kind}, constrained={cfg.constrained})")
    print(f"terminal state mean: {['%.4f' % v for v in final]}")
    if report.terminal["circular_mean"]:
        print(f"terminal circular means: "
              + ", ".join(f"{k}={v:.4f}" for k, v in report.terminal["circular_mean"].items()))
    print(f"mean terminal cost: {report.terminal['mean_terminal_cost']:.6g}")
    if cfg.constrained:
        print(f"bound violations: {report.bound_violations}")
    print(f"wrote {report_path} and {traj_path}")
    return 0


def _cmd_export_plots(args) -> int:
    report = EvalReport.load_json(args.report)
    out_dir = Path(args.out or Path(args.report).parent / "plots")
    written = export_plot_data(report, out_dir)
    for p in written:
        print(p)
    return 0


def _cmd_param_count(args) -> int:
    cfg = parse_config(args.config)
    system = cfg.build_system()
    for kind in ("fc-stack", "recurrent"):
        policy = make_policy(kind, system.n, system.v, cfg.hidden, cfg.n_steps, seed=0)
        marker = " (configured)" if kind == cfg.policy_kind else ""
        print(f"{kind}: {policy.param_count()} trainable parameters{marker}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbsde",
        description="Train and evaluate feedback policies for stochastic "
                    "control-affine systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy from a config file")
    p_train.add_argument("config")
    p_train.add_argument("--out", help="override the configured output directory")
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over fresh noise")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--trials", type=int, default=128)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=_cmd_eval)

    p_plots = sub.add_parser("export-plots", help="write per-channel plot CSVs")
    p_plots.add_argument("report", help="eval_report.json from a previous eval")
    p_plots.add_argument("--out")
    p_plots.set_defaults(func=_cmd_export_plots)

    p_count = sub.add_parser("param-count", help="parameter counts for both architectures")
    p_count.add_argument("config")
    p_count.set_defaults(func=_cmd_param_count)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except TrainingDiverged as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return 3
    except (CheckpointError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
