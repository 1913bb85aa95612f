# -*- coding: utf-8 -*-
"""Exception hierarchy shared by the loaders, detectors and the experiment runner."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class RoutineError(Exception):
    """Base class for every error raised by routine_discovery."""


class CorpusFormatError(RoutineError, ValueError):
    """A day or votes file does not follow the corpus layout."""

    def __init__(self, path: Union[str, Path], reason: str, line: Optional[int] = None) -> None:
        self.path = Path(path)
        self.line = line
        self.reason = reason
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {reason}")


class InvariantError(RoutineError, ValueError):
    """A domain object was built with values that break its invariants."""


class VoteCountError(RoutineError, ValueError):
    pass


class MissingFeaturesError(RoutineError, ValueError):
    """Global descriptors were requested but the day does not carry them."""


class StandardizationError(RoutineError, ValueError):
    pass


class DimensionError(RoutineError, ValueError):
    pass


class NotSymmetricError(RoutineError, ValueError):
    pass


class DegenerateCovarianceError(RoutineError, ValueError):
    pass


class CStepError(RoutineError):
    """The covariance determinant increased during a concentration step."""


class ConvergenceError(RoutineError, RuntimeError):
    """Iterative solver stopped at its iteration cap."""

    def __init__(self, message: str, kkt_violation: float) -> None:
        self.kkt_violation = kkt_violation
        super().__init__(f"{message} (final KKT violation {kkt_violation:.3e})")


class ConfigError(RoutineError, ValueError):
    pass


__all__ = [
    "RoutineError",
    "CorpusFormatError",
    "InvariantError",
    "VoteCountError",
    "MissingFeaturesError",
    "StandardizationError",
    "DimensionError",
    "NotSymmetricError",
    "DegenerateCovarianceError",
    "CStepError",
    "ConvergenceError",
    "ConfigError",
]
