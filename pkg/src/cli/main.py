"""``uot`` command-line entry point.

Usage::

    uot transport --config configs/transport_ghk.json -v
    uot quantize --config configs/quantize_bump.json --seed 3 --out runs/q3
"""

import argparse
import logging
from pathlib import Path
from typing import Optional, Sequence

from src.cli.commands import RUNNERS, run
from src.cli.status import configure_logging, report_error
from src.data.setups import describe_presets
from src.storage.config import ExperimentConfig, load_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per experiment type."""
    presets = "\n".join(f"  preset:{k}  {v}" for k, v in describe_presets().items())
    parser = argparse.ArgumentParser(
        prog="uot",
        description="Semi-discrete unbalanced transport and quantization experiments.",
        epilog=f"discrete measure presets:\n{presets}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(RUNNERS), help="experiment to run")
    parser.add_argument(
        "--config", required=True, type=Path, help="JSON experiment file"
    )
    parser.add_argument("--seed", type=int, default=None, help="override solver.seed")
    parser.add_argument("--out", type=Path, default=None, help="override output_dir")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, load the configuration and run it.

    Returns
    -------
    int
        Process exit status (see :func:`src.cli.commands.run`)
    """
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    configure_logging(args.verbose)
    try:
        config = load_config(args.config)
    except (OSError, ValueError) as error:
        return report_error(error, args.out)

    if config.command != args.command:
        logger.warning(
            "Config command '%s' replaced by '%s' from the command line",
            config.command,
            args.command,
        )
    data = config.model_dump()
    data["command"] = args.command
    if args.seed is not None:
        data["solver"]["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = str(args.out.resolve())
    try:
        config = ExperimentConfig.model_validate(data)
    except ValueError as error:
        return report_error(error, args.out)
    return run(config)
