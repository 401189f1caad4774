"""
Exceptions raised by robustscatter.

Every error derives from RobustScatterError so the experiment harness can
record a failed trial without aborting the batch.
"""

from __future__ import annotations


class RobustScatterError(Exception):
    """Base class for all robustscatter errors."""


class DomainError(RobustScatterError, ValueError):
    """An argument lies outside the domain of the operation."""


class OutOfRangeError(DomainError):
    """A value lies outside the range of an invertible map (e.g. phi)."""


class DimensionError(RobustScatterError, ValueError):
    """Matrix or vector dimensions do not agree."""


class SingularMatrixError(RobustScatterError):
    """A matrix that must be invertible could not be factorized."""


class SpanError(RobustScatterError):
    """The samples do not span the observation space."""


class NonConvergenceError(RobustScatterError):
    """An iteration hit its iteration limit before meeting the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class DegenerateScenarioError(RobustScatterError):
    """The array scenario has no well defined noise subspace."""


class DegenerateSpectrumError(RobustScatterError):
    """Repeated eigenvalues make a G-MUSIC weight denominator vanish."""

    def __init__(self, i: int, k: int, value: float):
        super().__init__(f"Eigenvalues {i} and {k} coincide ({value!r}); G-MUSIC weights undefined")
        self.i = i
        self.k = k


class DetectionFailureError(RobustScatterError):
    """A pseudo-spectrum has fewer local minima than requested sources."""


class MomentConditionError(DomainError):
    """An entry distribution violates the moment assumptions."""


class IdentityViolationError(RobustScatterError):
    """A check of an exact matrix identity or inequality failed."""


class ConfigError(RobustScatterError):
    """An experiment configuration is invalid; carries every problem found."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)
