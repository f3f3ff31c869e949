import argparse
import logging
import sys
from typing import List, Optional

from commands import clustering, training
from config import settings
from exceptions import DsPoolError, UsageError
from middleware import configure_logging, verbosity_level

logger = logging.getLogger(__name__)


class CliArgumentParser(argparse.ArgumentParser):
    """argparse parser that reports usage errors as exceptions instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="dspool",
        description="Recurrent dominant-set clustering and pooling of multi-view features",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")

    # Include subcommand groups
    clustering.register(subparsers)
    training.register(subparsers)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand, and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        # --help and --version exit through argparse
        return exc.code if isinstance(exc.code, int) else 0

    configure_logging(verbosity_level(args.verbose))
    logger.debug("Running %s in %s environment", args.command, settings.environment)
    try:
        return args.handler(args)
    except DsPoolError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
