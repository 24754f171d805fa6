"""Command-line entry point: ``need-replay <experiment> [flags]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError
from .config import EXPERIMENTS, ExperimentConfig
from .runner import run_experiment


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(part) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _int_range_list(text: str) -> list[int]:
    """``"8..13"`` or ``"3,5,7"``."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return _csv_list(int)(text)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flat ExperimentConfig keys")
    p.add_argument("--algo", type=_csv_list(str), dest="algorithms",
                   help="comma-separated algorithms or schemes")
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--alpha-exp", type=float, dest="alpha_exp", help="priority exponent")
    p.add_argument("--beta", type=float, help="importance-sampling exponent")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--step-size", type=float, dest="step_size")
    p.add_argument("--sr-lr", type=float, dest="sr_lr")
    p.add_argument("--minibatch", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--n-states", type=_int_range_list, dest="n_states",
                   help="list such as 8..13 or 3,5,7")
    p.add_argument("--lambdas", type=_csv_list(float))
    p.add_argument("--checkpoints", type=_csv_list(int))
    p.add_argument("--maze-file", dest="maze_file", help="text grid of . # S G")


OVERRIDE_KEYS = ("algorithms", "trials", "episodes", "seed", "out", "gamma", "lam", "alpha_exp",
                 "beta", "epsilon", "step_size", "sr_lr", "minibatch", "budget", "n_states",
                 "lambdas", "checkpoints", "maze_file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="need-replay",
        description="Replay prioritization by TD error and successor-representation need.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    run = sub.add_parser("run", help="run the experiment named in --config or --experiment")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    _add_run_flags(run)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    experiment = args.command if args.command != "run" else (args.experiment or cfg.experiment)
    if args.command != "run" and args.config and cfg.experiment != experiment:
        raise ConfigError("experiment",
                          f"config file is for {cfg.experiment!r}, subcommand is {experiment!r}")
    overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS}
    return cfg.with_overrides(experiment=experiment, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = run_experiment(config_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for path in summary.files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
