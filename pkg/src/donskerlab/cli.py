"""Command-line interface.

Subcommands map onto solver toggles of one shared experiment driver:

    simulate        particle system only
    fokker-planck   grid SPDE solve only
    closed-form     explicit formulas only
    volterra        kernel-equation solve only
    local-time      local-time curves (plus the grid solve for the dual estimator)
    compare         grid solve vs closed form with comparison reports
    validate        the full acceptance suite
    run             exactly the solvers enabled in the config

Exit codes: 0 success, 1 tolerance failure, 2 invalid configuration,
3 solver failure.  DONSKER_THREADS caps worker count (0 = auto).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, DonskerLabError
from .harness import ExperimentConfig, run_experiment
from .validation import DEFAULT_MASTER_SEED, run_validation

_SUBCOMMAND_SOLVERS = {
    "simulate": ("particle",),
    "fokker-planck": ("fp",),
    "closed-form": ("closedform",),
    "volterra": ("volterra",),
    "local-time": ("localtime", "fp"),
    "compare": ("fp", "closedform"),
    "run": None,  # honor the config
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="donskerlab",
        description="Conditional-density and local-time laboratory for "
                    "mean-field SDEs with common noise.",
    )
    parser.add_argument("--config", help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config's master seed")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_SOLVERS:
        sub.add_parser(name, help=f"{name} run")
    sub.add_parser("validate", help="run the full acceptance suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def say(line):
        if not args.quiet:
            print(line)

    if args.command == "validate":
        seed = args.seed if args.seed is not None else DEFAULT_MASTER_SEED
        results = run_validation(seed, out_dir=args.out)
        ok = True
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            say(f"{status} criterion {r.name}")
            for line in r.lines:
                say(f"    {line}")
            ok = ok and r.passed
        return 0 if ok else 1

    if args.config is None:
        print("error: --config is required for this command", file=sys.stderr)
        return 2
    try:
        config = ExperimentConfig.from_json(args.config)
        if args.seed is not None:
            config = replace(config, master_seed=args.seed)
        forced = _SUBCOMMAND_SOLVERS[args.command]
        if forced is not None:
            config = replace(config, solvers=tuple(forced))
        result = run_experiment(config, out_dir=args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DonskerLabError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 3

    for line in result.messages:
        say(line)
    say(f"wrote {len(result.files)} files")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
