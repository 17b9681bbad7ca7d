"""Command-line front end: one subcommand per experiment kind.

Exit codes: 0 success, 2 configuration problems (every error listed),
3 a mid-run invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import EXPERIMENT_KINDS, ConfigError, parse_config
from .experiments import WORKERS_ENV_VAR, InvariantViolation, run_experiment

_KIND_HELP = {
    "simulate": "raw trajectories of the basic model",
    "survival": "extinction-time survival curve P(tau > n)",
    "speed": "front speed via path averages and regeneration increments",
    "clt": "Gaussian check on the centered, scaled right front",
    "react": "reactivated-front speed against the drift floor",
    "criterion": "percolation verdict from the containment series",
    "oracle": "exact enumerated distributions for small horizons",
    "probe": "domination probes of the restart-from-the-front event",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rumorline",
        description="Rumour spread on the integer line: simulation and estimation experiments.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in EXPERIMENT_KINDS:
        sp = sub.add_parser(kind, help=_KIND_HELP[kind])
        sp.add_argument("--config", metavar="PATH",
                        help="YAML experiment description (kind may be omitted there)")
        sp.add_argument("--seed", type=int, metavar="U64",
                        help="override the config's master seed")
        sp.add_argument("--out", metavar="DIR",
                        help="artifact directory (default from config or derived)")
        sp.add_argument("--workers", type=int, metavar="N",
                        help=f"worker count (default ${WORKERS_ENV_VAR} or 1)")
        sp.add_argument("--level", type=float,
                        help="override the config's confidence level")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    try:
        cfg = parse_config(text, default_kind=args.kind)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.level is not None:
            overrides["level"] = args.level
        if overrides:
            cfg = parse_config_overrides(cfg, overrides)
    except ConfigError as exc:
        print("config errors:", file=sys.stderr)
        for msg in exc.errors:
            print(f"  - {msg}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(cfg, out=args.out, workers=args.workers)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.kind}: artifacts in {result.out_dir}")
    return 0


def parse_config_overrides(cfg, overrides: dict):
    """Re-validate the config with CLI overrides applied (a plain copy would
    skip the field checks)."""
    from pydantic import ValidationError

    try:
        return type(cfg).model_validate({**cfg.model_dump(), **overrides})
    except ValidationError as exc:
        raise ConfigError(
            [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        ) from exc


if __name__ == "__main__":
    sys.exit(main())
