"""
Logging setup for the command-line entry point.

Library modules only call ``logging.getLogger(__name__)``; handlers are
configured once here.
"""
import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbosity: int = 0) -> None:
    """
    Configure the root logger.

    Args:
        verbosity: 0 -> WARNING, 1 -> INFO, 2 or more -> DEBUG
    """
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
