"""Command-line interface: train / eval / report."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .harness import evaluate_policy, run_experiment
from .report import render_report


def _add_config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dilute-rl",
        description="Dialogue policy RL with epsilon-Boltzmann exploration "
                    "and expert dilution.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training + checkpoint evaluation")
    _add_config_args(p_train)
    p_train.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_config_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_report = sub.add_parser("report", help="aggregate metrics into CSV + figures")
    p_report.add_argument("--in", dest="in_dir", required=True)
    p_report.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)

    if args.command == "report":
        rows = render_report(args.in_dir, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
        return 0

    try:
        config = parse_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "train":
        rows = run_experiment(config, args.out)
        for row in rows:
            print(f"seed={row['seed']} checkpoint={row['checkpoint']} "
                  f"success={row['success_rate']:.3f} "
                  f"reward={row['avg_reward']:.2f}")
        return 0

    metrics = evaluate_policy(args.checkpoint, config)
    print(f"checkpoint@{metrics.dialogue_index}: "
          f"success={metrics.success_rate:.3f} reward={metrics.avg_reward:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
