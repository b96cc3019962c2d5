"""
Command-line entry point: ``bfreg --config run.json [--seed N] [--out DIR]``.

Every setting besides the seed and output directory lives in the config
file. ``BFREG_NUM_THREADS`` caps the BLAS thread pools for the run.
"""

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from typing import Optional, Sequence

from threadpoolctl import threadpool_limits

from .config import load_config
from .errors import BFRegError, ConfigError
from .runner import REPORT_FILE, dispatch

THREADS_ENV = "BFREG_NUM_THREADS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfreg", description="Knowledge-structured expression modelling")
    parser.add_argument("--config", required=True, help="Run config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--out", default=None, help="Output directory (overrides the config)")
    parser.add_argument("--debug", action="store_true", help="Debug logging")
    return parser


def thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    if limit < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive, got {limit}")
    return threadpool_limits(limits=limit)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out=args.out)
        with thread_limit():
            result = dispatch(config)
    except BFRegError as e:
        print(f"bfreg: error: {e}", file=sys.stderr)
        return 1
    print(result.out / REPORT_FILE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
