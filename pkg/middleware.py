import functools
import logging
import sys
import time
from datetime import datetime

from config import settings

logger = logging.getLogger("dspool.commands")

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def configure_logging(level=None):
    """Send all diagnostics to stderr; stdout carries results only."""
    level = level or settings.log_level
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_dspool", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler._dspool = True
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


def verbosity_level(verbose: int) -> str:
    if verbose >= 2:
        return "DEBUG"
    if verbose == 1:
        return "INFO"
    return settings.log_level


def logging_middleware(handler):
    """Command timing wrapper - quiet for local development"""

    @functools.wraps(handler)
    def wrapper(args) -> int:
        start_time = time.time()
        exit_code = 1
        try:
            exit_code = handler(args)
            return exit_code
        except Exception as exc:
            exit_code = getattr(exc, "exit_code", 1)
            raise
        finally:
            process_time = int((time.time() - start_time) * 1000)
            if settings.environment == "development":
                # Only log slow commands
                if process_time > 1000:
                    logger.info("%s - %s - %dms", args.command, exit_code, process_time)
            else:
                logger.info(
                    "%s - %s - %s - %dms",
                    datetime.utcnow().isoformat(), args.command, exit_code, process_time,
                )

    return wrapper
