"""CLI subcommand groups and the options they share."""

import argparse
from typing import Iterable, List, Optional

from pydantic import ValidationError

from config import settings
from exceptions import InvalidInputError
from models import PoolStructure
from schemas import CliConfig

STRUCTURE_NAMES = [structure.value for structure in PoolStructure]


def common_options() -> argparse.ArgumentParser:
    """Parent parser with the knobs every subcommand accepts."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG on stderr")
    parent.add_argument("--output", "-o", default=None, help="output path (stdout when omitted)")
    parent.add_argument("--seed", type=int, default=settings.seed, help="seed for every stochastic step")
    return parent


def domset_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--tol", type=float, default=settings.tol, help="replicator L1 stopping tolerance")
    parent.add_argument("--max-iter", type=int, default=settings.max_iter, help="replicator iteration cap")
    parent.add_argument(
        "--support-threshold",
        type=float,
        default=settings.support_threshold,
        help="characteristic-vector cutoff for cluster membership",
    )
    parent.add_argument("--depth", type=int, default=settings.max_depth, help="maximum number of recurrences")
    return parent


def add_structure(parser: argparse.ArgumentParser, default: Optional[str] = PoolStructure.DS_ALT_F_MAX.value) -> None:
    help_text = "pooling structure" if default else "pooling structure (taken from --hierarchy, else ds-alt-f-max)"
    parser.add_argument("--structure", choices=STRUCTURE_NAMES, default=default, help=help_text)


def cli_config(args: argparse.Namespace, inputs: Iterable = (), outputs: Iterable = ()) -> CliConfig:
    """Validate knobs and input paths before any work starts."""
    knobs = {
        name: getattr(args, name)
        for name in ("structure", "tol", "max_iter", "support_threshold", "depth", "seed", "learning_rate", "epochs")
        if getattr(args, name, None) is not None
    }
    try:
        return CliConfig(
            subcommand=args.command,
            inputs=[str(path) for path in inputs if path is not None],
            outputs=[str(path) for path in outputs if path is not None],
            **knobs,
        )
    except ValidationError as exc:
        problems: List[str] = [
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in exc.errors()
        ]
        raise InvalidInputError("; ".join(problems)) from exc
