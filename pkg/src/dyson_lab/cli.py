"""``dyson-lab`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 a scientific property
check failed (artifacts are still written).
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .model import DysonError
from .runner import EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, OutputExists, run_experiment


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyson-lab", description="Dyson model experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="path to a 'key = value' config file")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--out", help="base output directory (default: the config's 'out', else ./runs)")
    r.add_argument("--force", action="store_true", help="overwrite an existing run with the same hash")
    sub.add_parser("check", help="run the fast invariant suite")
    return p


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    cfg = cfg.with_overrides(seed=args.seed)
    try:
        status, target = run_experiment(cfg, args.out, force=args.force)
    except OutputExists as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DysonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    verdict = "properties hold" if status == EXIT_OK else "property check FAILED"
    print(f"{cfg.kind}: {verdict}; artifacts in {target}")
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    from .checks import run_checks

    return EXIT_OK if run_checks() else EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
