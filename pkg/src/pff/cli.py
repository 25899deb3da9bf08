"""Command-line entry point.

    pff run --preset sent --out ./out [--config FILE] [--set section.key=value ...]

Exit codes: 0 completed, 2 configuration error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .config import PRESETS, load_config, preset_config
from .errors import ConfigurationError

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pff", description="Phase-field fracture with arc-length continuation")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a simulation")
    run.add_argument("--preset", choices=sorted(PRESETS), type=str.lower)
    run.add_argument("--config", type=Path, help="INI file with [geometry] [material] [solver] [amr] [output]")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _threads():
    """Limit BLAS/LAPACK threads when ``PFF_THREADS`` is set."""
    value = os.environ.get("PFF_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ConfigurationError(f"PFF_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigurationError("PFF_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_config(args):
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        cfg = load_config(text, preset=args.preset)
    elif args.preset is not None:
        cfg = preset_config(args.preset)
    else:
        raise ConfigurationError("either --preset or --config is required")
    if args.preset is not None and args.config is not None and cfg.geometry.preset != args.preset:
        raise ConfigurationError(f"--preset {args.preset} conflicts with config preset {cfg.geometry.preset}")
    for item in args.overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        limits = _threads()
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .app import run_config

    def report(record, disc, state):
        logging.getLogger("pff").info(
            "step %d %s lambda=%.6e load=%.6e iters=%d", record.step, record.mode, record.lam, record.load,
            record.iterations,
        )

    try:
        with limits:
            result = run_config(cfg, args.out, report)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if result.status != "completed":
        print(f"solver aborted after {len(result.history)} steps: {result.message}", file=sys.stderr)
        return EXIT_ABORT
    print(f"completed {len(result.history)} steps ({result.message}); outputs in {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
