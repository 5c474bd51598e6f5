"""Command-line entry point: ``robust-shadows run|validate|moment-check``.

Exit codes: 0 success, 2 configuration error, 3 a ``--check`` threshold failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigurationError, RobustShadowsError
from .experiments import check_thresholds, load_config, moment_check, run_experiment, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_THRESHOLD = 0, 2, 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
        cfg.validate()
    if args.output is not None:
        cfg.output_path = args.output
    result = run_experiment(cfg)
    csv_path, sidecar = write_outputs(cfg, result)
    print(f"wrote {len(result.rows)} rows to {csv_path} (metadata in {sidecar})")
    if args.check:
        verdicts = check_thresholds(cfg, result)
        for name, ok in verdicts.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        if not all(verdicts.values()):
            return EXIT_THRESHOLD
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_moment_check(args) -> int:
    if args.d < 1 or not 1 <= args.k <= 8 or args.samples < 2:
        raise ConfigurationError("need d >= 1, 1 <= k <= 8 and samples >= 2")
    rng = np.random.default_rng(args.seed)
    checks = moment_check(args.d, args.k, args.samples, args.observables, rng)
    print("k  obs  exact                  empirical              z")
    for c in checks:
        print(f"{c['k']:<2} {c['observable_index']:<4} {c['exact']:<22.15g} {c['empirical']:<22.15g} {c['z']:+.2f}")
    within = np.mean([abs(c["z"]) <= 5 for c in checks])
    print(f"{within:.1%} of checks within 5 standard errors")
    return EXIT_OK if within >= 0.95 else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-shadows", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--check", action="store_true", help="evaluate pass/fail thresholds")
    run.add_argument("--workers", type=int, help="processes used for repeats")
    run.add_argument("--output", help="override output_path from the config")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="parse and print a config without running it")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)

    mc = sub.add_parser("moment-check", help="compare Haar moments with Monte Carlo")
    mc.add_argument("--d", type=int, default=4)
    mc.add_argument("--k", type=int, default=4, help="highest moment order")
    mc.add_argument("--samples", type=int, default=100_000)
    mc.add_argument("--observables", type=int, default=5)
    mc.add_argument("--seed", type=int, default=0)
    mc.set_defaults(func=_cmd_moment_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RobustShadowsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
