"""Command line entry point: ``cryptofactor <subcommand> --config <path>``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import CryptoFactorError
from .pipeline import STAGE_FUNCS, run

SUBCOMMANDS = [*STAGE_FUNCS, "all"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cryptofactor",
        description="Crypto factor construction, idiosyncratic volatility and "
                    "investor-base panel regressions.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, help="worker threads for per coin-month fits")
    parser.add_argument("--seed", type=int, help="seed for the synth subcommand")
    return parser


def _setup_logging():
    level = os.environ.get("CRYPTOFACTOR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        out = str(Path(args.out).resolve()) if args.out else None
        cfg = load_config(args.config, output_dir=out, threads=args.threads, seed=args.seed)
        written = run(args.subcommand, cfg)
    except CryptoFactorError as exc:
        print(f"cryptofactor: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
