import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from config import config
from errors import ConfigError, QbError
from experiment import ExperimentRunner
from exporters import format_summaries, write_outcome
from presets import dump_config, preset, preset_catalog, resolve, with_overrides

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_IO = 3

# CLI flag -> dotted RunConfig path
FLAG_PATHS = {
    "seed": "simulation.seed",
    "paths": "simulation.paths",
    "horizon": "simulation.horizon",
    "trace": "simulation.trace",
    "stride": "output.stride",
}


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else config.LOG_LEVEL
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qblearn",
        description="Simulate naive and biased Q-learning in repeated games",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a preset or a config file")
    run.add_argument("target", help="preset name or path to a YAML config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--paths", type=int, help="number of paths per batch")
    run.add_argument("--horizon", type=int, help="periods per path")
    run.add_argument("--threads", type=int, help="worker count (0 = all cores)")
    run.add_argument("--backend", help="joblib backend, e.g. loky or threading")
    run.add_argument("--trace", choices=["none", "aggregates", "full"])
    run.add_argument("--stride", type=int, help="keep every n-th trace record")
    run.set_defaults(handler=cmd_run)

    listing = commands.add_parser("list", help="list presets")
    listing.set_defaults(handler=cmd_list)

    show = commands.add_parser("show", help="print a preset as YAML")
    show.add_argument("name")
    show.set_defaults(handler=cmd_show)
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {}
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[path] = value
    return overrides


def cmd_run(args: argparse.Namespace) -> int:
    run_config = with_overrides(resolve(args.target), flag_overrides(args), "flags")
    threads = config.THREADS if args.threads is None else args.threads
    out_dir = (
        args.out
        or run_config.output.directory
        or os.path.join(config.OUTPUT_DIR, run_config.name)
    )
    outcome = ExperimentRunner(run_config, threads=threads, backend=args.backend).run()
    write_outcome(outcome, out_dir, threads=threads)
    summary = format_summaries(outcome)
    if summary:
        print(summary)
    print(f"\nArtifacts written to {out_dir}")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name, description in preset_catalog():
        print(f"{name:28s} {description}")
    return EXIT_OK


def cmd_show(args: argparse.Namespace) -> int:
    print(dump_config(preset(args.name)), end="")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return EXIT_IO
    except QbError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
