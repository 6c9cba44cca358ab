"""Exception hierarchy.

Math failures carry the offending point so the CLI can report it.
"""

from __future__ import annotations

import numpy as np


class RicciForgeError(Exception):
    """Base class for all library errors."""


class MathError(RicciForgeError):
    """A numerical evaluation hit an invalid configuration at a point."""

    def __init__(self, message: str, point=None):
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()
        if self.point is not None:
            message = f"{message} at x={self.point}"
        super().__init__(message)


class DomainError(MathError):
    """A scalar field was evaluated outside its validity domain."""


class DefinitenessError(MathError):
    """The metric is not positive definite."""


class RankError(MathError):
    """Spanning vectors of the split are linearly dependent."""


class SingularFactorError(DomainError):
    """A conformal factor vanished or became negative."""


class DegeneracyError(MathError):
    """Vectors spanning a plane are linearly dependent."""


class StepSizeError(MathError):
    """A variation parameter left the frame-validity region."""


class ConfigurationError(RicciForgeError):
    """Dimensions or parameters are inconsistent with an operation."""


class CompactnessError(ConfigurationError):
    """An integral over the manifold was requested on a non-compact chart."""


class CompatibilityError(ConfigurationError):
    """A prescribed tensor violates its trace compatibility condition."""


class ExpressionError(RicciForgeError):
    """Malformed expression JSON; ``pointer`` locates the offending node."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer or "/"
        super().__init__(f"{message} (at {self.pointer})")


class NotFoundError(RicciForgeError):
    """Unknown catalog entry."""
