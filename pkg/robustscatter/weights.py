"""
Weight functions u(s) of the robust scatter estimator.

A usable u is nonnegative, nonincreasing and continuous on [0, inf), and
phi(s) = s u(s) is nondecreasing, bounded by phi_inf > 1 and strictly
increasing wherever it stays below phi_inf.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Mapping, Union

import numpy as np
from scipy.optimize import bisect

from robustscatter.errors import ConfigError, DomainError, OutOfRangeError
from robustscatter.scatterSettings import ValidationReport, WeightFamily

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# phi_inverse accuracy
INVERSE_RTOL = 1e-12


def _nonnegative(s: ArrayLike) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"Weight functions are defined on [0, inf), got {s!r}")
    return arr


def _like(value: np.ndarray, s: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(s) == 0 else value


class WeightFunction(ABC):
    """The triple (u, phi, phi^-1) with the supremum phi_inf."""

    family: WeightFamily
    phi_inf: float

    @property
    @abstractmethod
    def params(self) -> dict[str, float]:
        """Family specific parameters, as found in a config file."""

    @abstractmethod
    def _u(self, s: np.ndarray) -> np.ndarray:
        ...

    def u(self, s: ArrayLike) -> ArrayLike:
        arr = _nonnegative(s)
        return _like(self._u(arr), s)

    def phi(self, s: ArrayLike) -> ArrayLike:
        arr = _nonnegative(s)
        return _like(arr * self._u(arr), s)

    def phi_inverse(self, y: float) -> float:
        """Solve phi(s) = y on the increasing region by bisection."""
        self._check_range(y)

        hi = 1.0
        while self.phi(hi) < y:
            hi *= 2.0
            if hi > 1e300:
                raise OutOfRangeError(f"phi never reaches {y} (phi_inf={self.phi_inf})")

        return float(bisect(lambda s: self.phi(s) - y, 0.0, hi, xtol=np.finfo(float).tiny, rtol=INVERSE_RTOL))

    def _check_range(self, y: float) -> None:
        if not 0 < y < self.phi_inf:
            raise OutOfRangeError(f"phi^-1 is defined on (0, {self.phi_inf}), got {y}")

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightFunction) or type(other) is not type(self):
            return NotImplemented
        return self.params == other.params

    def __hash__(self) -> int:
        return hash((type(self).__name__, tuple(sorted(self.params.items()))))


class HuberWeight(WeightFunction):
    """phi(s) = phi_inf s / (phi_inf - 1) up to s = phi_inf - 1, then flat."""

    family = WeightFamily.HUBER

    def __init__(self, phi_inf: float):
        if not phi_inf > 1:
            raise DomainError(f"Huber weights need phi_inf > 1, got {phi_inf}")
        self.phi_inf = float(phi_inf)

    @property
    def params(self) -> dict[str, float]:
        return {"phi_inf": self.phi_inf}

    def _u(self, s: np.ndarray) -> np.ndarray:
        # constant phi_inf / (phi_inf - 1) on the linear branch, phi_inf / s beyond the kink
        return self.phi_inf / np.maximum(s, self.phi_inf - 1.0)

    def phi_inverse(self, y: float) -> float:
        self._check_range(y)
        return y * (self.phi_inf - 1.0) / self.phi_inf


class StudentTWeight(WeightFunction):
    """u(s) = (1 + t) / (t + s), phi_inf = 1 + t."""

    family = WeightFamily.STUDENT_T

    def __init__(self, t: float):
        if not t > 0:
            raise DomainError(f"Student-t weights need t > 0, got {t}")
        self.t = float(t)
        self.phi_inf = 1.0 + self.t

    @property
    def params(self) -> dict[str, float]:
        return {"t": self.t}

    def _u(self, s: np.ndarray) -> np.ndarray:
        return (1.0 + self.t) / (self.t + s)

    def phi_inverse(self, y: float) -> float:
        self._check_range(y)
        return y * self.t / (1.0 + self.t - y)


class CallableWeight(WeightFunction):
    """A user supplied u with a declared phi_inf. Run validate() before use."""

    family = WeightFamily.CUSTOM

    def __init__(self, u: Callable[[np.ndarray], np.ndarray], phi_inf: float, name: str = "custom"):
        self._func = u
        self.phi_inf = float(phi_inf)
        self.name = name

    @property
    def params(self) -> dict[str, float]:
        return {"phi_inf": self.phi_inf}

    def _u(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(self._func(s), dtype=float)

    def __eq__(self, other: object) -> bool:
        return self is other

    __hash__ = WeightFunction.__hash__


def eval_u(w: WeightFunction, s: ArrayLike) -> ArrayLike:
    return w.u(s)


def eval_phi(w: WeightFunction, s: ArrayLike) -> ArrayLike:
    return w.phi(s)


def phi_inverse(w: WeightFunction, y: float) -> float:
    return w.phi_inverse(y)


def validate(w: WeightFunction, grid, atol: float = 1e-12) -> ValidationReport:
    """Check conditions on u and phi numerically on a grid.

    Violations are reported in a fixed order; the first one found is the
    report's first_violation.
    """

    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("Validation grid must be a nonempty vector")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("Validation grid must be strictly increasing")

    u = np.asarray(w.u(grid), dtype=float)
    phi = grid * u
    violations = []

    def first(mask: np.ndarray) -> float:
        return float(grid[1:][mask][0]) if mask.shape[0] < grid.size else float(grid[mask][0])

    if not w.phi_inf > 1:
        violations.append(f"phi_inf must exceed 1, got {w.phi_inf}")
    if np.any(u < 0):
        violations.append(f"u is negative at s={first(u < 0)}")
    if not np.all(np.isfinite(u)):
        violations.append(f"u is not finite at s={first(~np.isfinite(u))}")

    rising = np.diff(u) > atol * np.maximum(1.0, np.abs(u[:-1]))
    if np.any(rising):
        violations.append(f"u is not nonincreasing near s={first(rising)}")

    falling = np.diff(phi) < -atol * np.maximum(1.0, np.abs(phi[:-1]))
    if np.any(falling):
        violations.append(f"phi is not nondecreasing near s={first(falling)}")

    above = phi > w.phi_inf * (1 + atol)
    if np.any(above):
        violations.append(f"phi exceeds phi_inf={w.phi_inf} at s={first(above)}")

    # strictly increasing below the supremum
    below = phi[1:] < w.phi_inf * (1 - 1e-9)
    flat = below & (np.diff(phi) <= 0)
    if np.any(flat):
        violations.append(f"phi is flat below phi_inf near s={first(flat)}")

    report = ValidationReport(valid=not violations, phi_inf=w.phi_inf, violations=violations)
    if violations:
        logger.info("%r failed validation: %s", w, violations[0])
    return report


def weight_from_config(desc: Union[str, Mapping[str, Any]]) -> WeightFunction:
    """Build a weight function from {"family": ..., ...} or "family:param"."""

    if isinstance(desc, str):
        family, _, param = desc.partition(":")
        try:
            value = float(param)
        except ValueError:
            raise ConfigError([f"Invalid weight descriptor {desc!r}, expected e.g. huber:2.0 or student_t:1.0"])
        desc = {"family": family, "phi_inf" if family == WeightFamily.HUBER.value else "t": value}

    family = desc.get("family")
    try:
        if family == WeightFamily.HUBER.value:
            return HuberWeight(float(desc["phi_inf"]))
        if family == WeightFamily.STUDENT_T.value:
            return StudentTWeight(float(desc["t"]))
    except KeyError as e:
        raise ConfigError([f"Weight family {family!r} is missing parameter {e}"])
    except DomainError as e:
        raise ConfigError([str(e)])
    except (TypeError, ValueError):
        raise ConfigError([f"Weight family {family!r} needs a numeric parameter, got {dict(desc)!r}"])

    raise ConfigError([f"Unknown weight family {family!r} (expected huber or student_t)"])


def weight_to_config(w: WeightFunction) -> dict[str, Any]:
    return {"family": w.family.value, **w.params}


def maronna_condition(w: WeightFunction, N: int, n: int) -> bool:
    """Classical finite sample existence condition phi_inf > n / (n - N)."""
    if n <= N:
        return False
    return w.phi_inf > n / (n - N)
