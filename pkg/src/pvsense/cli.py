"""Command-line experiment driver: run / list / replay."""

from __future__ import annotations

import argparse
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvsense",
        description="Uplink passive-sensing Monte Carlo experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or config-file experiment")
    run.add_argument("--preset", help="preset name (see `pvsense list`)")
    run.add_argument("--config", help="key=value experiment config file")
    run.add_argument("--seed", type=int, help="master seed override")
    run.add_argument("--trials", type=int, help="trial count override")
    run.add_argument("--out", help="output directory override")

    sub.add_parser("list", help="list available presets")

    rep = sub.add_parser("replay", help="re-run one trial of a finished "
                                        "experiment from its saved config")
    rep.add_argument("--out", required=True, help="experiment output dir")
    rep.add_argument("--trial", type=int, required=True, help="trial index")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list":
        for name in harness.list_presets():
            print(name)
        return 0

    if args.command == "replay":
        rows = harness.replay_trial(args.out, args.trial)
        for row in rows:
            print(row)
        return 0

    if bool(args.preset) == bool(args.config):
        print("run: give exactly one of --preset or --config", file=sys.stderr)
        return 2
    if args.preset:
        spec = harness.preset(args.preset, n_trials=args.trials,
                              seed=args.seed, output_dir=args.out)
    else:
        spec = harness.load_experiment_spec(args.config)
        overrides = {}
        if args.trials is not None:
            overrides["n_trials"] = args.trials
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        if overrides:
            import dataclasses
            spec = dataclasses.replace(spec, **overrides)

    result = harness.run_experiment(spec)
    print(f"{spec.name}: {len(result.records)} trial records")
    for row in result.summary[:40]:
        print(row)
    if len(result.summary) > 40:
        print(f"... {len(result.summary) - 40} more summary rows")
    for path in result.files:
        print("wrote", path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
