"""
Exception hierarchy shared by every gazegest module.

The command-line entry point maps these onto exit codes:
ConfigError -> 2, every other GazegestError -> 1.
"""
from typing import Optional


class GazegestError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GazegestError):
    """Invalid configuration, flag combination or model/plan parameters."""


class DataError(GazegestError):
    """Input data cannot be used (empty logs, missing stages, empty folds)."""

    def __init__(self, message: str, where: Optional[str] = None):
        self.where = where
        super().__init__(f"{message} [{where}]" if where else message)


class ShapeError(GazegestError, ValueError):
    """Operand shapes disagree."""


class GraphStateError(GazegestError, RuntimeError):
    """A model graph was used out of order (e.g. backward before forward)."""
