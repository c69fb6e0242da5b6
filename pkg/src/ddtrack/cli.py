"""``ddtrack`` command line: one subcommand per pipeline stage plus ``run-all``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .pipeline import STAGES, StageError, run_all

COMMANDS = (*STAGES, "run-all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddtrack", description="Delay-Doppler graph tracking pipeline")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, default=None, help="YAML experiment config")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--profile", choices=("paper", "desk"), default=None,
                   help="built-in parameter profile; config values override it")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        profile = args.profile if args.profile or args.config else "desk"
        cfg = load_config(args.config, profile)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.out_dir)
        if args.command == "run-all":
            results = run_all(cfg, out)
        else:
            results = STAGES[args.command](cfg, out)
        if args.command in ("report", "run-all"):
            print(f"{'Method':<15}{'NMSE_tau':>12}{'NMSE_nu':>12}")
            for r in results:
                print(f"{r.method:<15}{r.nmse_tau:>12.4g}{r.nmse_nu:>12.4g}")
    except ConfigError as exc:
        print(f"ddtrack {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"ddtrack {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
