"""Command-line entry point: ``bvsbench {simulate,evaluate,sweep,plot}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .._validation import ConfigurationError
from .config import ENV_PREFIX, load_config
from .plots import emit_plots
from .sweep import run_evaluate, run_simulate, run_sweep

log = logging.getLogger("bvsbench")

EPILOG = (f"Config keys can be overridden with environment variables {ENV_PREFIX}<SECTION>__<KEY>=<yaml>, "
          f"e.g. {ENV_PREFIX}SWEEP__RPM='[50, 500]'.")


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _jobs(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("jobs must be >= 1")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (default: output.dir of the config)")
    common.add_argument("--jobs", type=_jobs, default=None, help="worker processes (default: available CPUs)")
    common.add_argument("--lenient", action="store_true", help="warn on unknown config keys instead of failing")
    common.add_argument("-v", "--verbose", action="count", default=0)
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", type=Path, required=True, help="YAML run configuration")
    run.add_argument("--seed", type=_seed, default=None, help="override the config seed")

    parser = argparse.ArgumentParser(prog="bvsbench", description="Rotating-turntable benchmark for event and "
                                     "temporal/spatial-difference vision sensors.", epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common, run], help="simulate sensors and save streams/frames", epilog=EPILOG)
    ev = sub.add_parser("evaluate", parents=[common], help="evaluate data saved by simulate", epilog=EPILOG)
    ev.add_argument("run_dir", type=Path, help="directory written by simulate")
    ev.add_argument("--config", type=Path, default=None, help="evaluate with this config instead of the saved one")
    sub.add_parser("sweep", parents=[common, run], help="simulate and evaluate every cell", epilog=EPILOG)
    pl = sub.add_parser("plot", parents=[common], help="SVG line charts from a report")
    pl.add_argument("report", type=Path)
    pl.add_argument("--log-x", action="store_true", help="logarithmic rpm axis")
    return parser


def _load(args):
    cfg = load_config(args.config, strict=not args.lenient)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            path = run_simulate(_load(args), args.out, args.jobs)
        elif args.command == "sweep":
            path = run_sweep(_load(args), args.out, args.jobs)
        elif args.command == "evaluate":
            cfg = _load(args) if args.config is not None else None
            path = run_evaluate(args.run_dir, args.out, args.jobs, strict=not args.lenient, cfg=cfg)
        else:
            paths = emit_plots(args.report, args.out, log_x=args.log_x)
            for p in paths:
                print(p)
            return 0
    except ConfigurationError as exc:
        print(f"bvsbench: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
