"""Command line interface: ``fraclp run | sweep | plotdata``.

Exit status: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, config_help, parse_config
from .experiment import StageError, emit_plotdata, run_experiment, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser():
    parser = argparse.ArgumentParser(
        prog="fraclp",
        description="Sparse L^p-regularized optimization in fractional Sobolev spaces.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment",
                           epilog=config_help(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--output", type=Path, default=None,
                       help="output directory (default: output.directory)")
    p_run.add_argument("--verbose", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run every value of [sweep]",
                             epilog=config_help(),
                             formatter_class=argparse.RawDescriptionHelpFormatter)
    p_sweep.add_argument("--config", required=True, type=Path)
    p_sweep.add_argument("--output", type=Path, default=None)
    p_sweep.add_argument("--verbose", action="store_true")

    p_plot = sub.add_parser("plotdata", help="write plot-ready CSVs for a finished run")
    p_plot.add_argument("run_dir", type=Path)
    p_plot.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plotdata":
            for path in emit_plotdata(args.run_dir):
                print(path)
            return EXIT_OK
        cfg = parse_config(args.config)
        base = args.config.resolve().parent
        if args.command == "run":
            out = run_experiment(cfg, args.output, base_dir=base)
        else:
            out = run_sweep(cfg, args.output, base_dir=base)
        print(out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"fraclp: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"fraclp: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"fraclp: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
