from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Optional

import numpy as np

from robustscatter.errors import DomainError, MomentConditionError

if TYPE_CHECKING:
    from robustscatter.weights import WeightFunction


class WeightFamily(Enum):
    """Weight function families u(s)."""

    HUBER = "huber"
    STUDENT_T = "student_t"
    CUSTOM = "custom"  # user supplied u, inverted by bisection


class EntryKind(Enum):
    """Distribution of the independent entries y_ij."""

    GAUSSIAN_COMPLEX = "gaussian_complex"
    GAUSSIAN_REAL = "gaussian_real"
    QPSK = "qpsk"
    STUDENT_T_NORMALIZED = "student_t_normalized"  # real, scaled to unit variance
    STUDENT_T_COMPLEX = "student_t_complex"  # (t1 + i t2) / sqrt(2)


class CovarianceKind(Enum):
    """Population covariance models C_N."""

    IDENTITY = "identity"
    SCALED_IDENTITY = "scaled_identity"
    TOEPLITZ = "toeplitz"  # C_jk = rho^|j-k|
    SPIKED = "spiked"  # identity base with the largest eigenvalues replaced


class SpectrumKind(Enum):
    TRUE_MUSIC = "true_music"
    EMPIRICAL_MUSIC = "empirical_music"
    GMUSIC = "gmusic"
    ROBUST_GMUSIC = "robust_gmusic"


class DoaMethod(Enum):
    MUSIC = "music"
    GMUSIC = "gmusic"
    ROBUST = "robust"


class ExperimentKind(Enum):
    """Experiments the harness knows how to run."""

    THEOREM1_GAP = "theorem1_gap"
    SPACING = "spacing"
    CONCENTRATION = "concentration"
    EN_VALIDATION = "en_validation"
    LEMMA_CHECKS = "lemma_checks"
    SUPPORT_DIAGNOSTIC = "support_diagnostic"
    DOA_COMPARE = "doa_compare"
    EXISTENCE_ITERATIONS = "existence_iterations"


class ReportFormat(Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class SampleSet:
    """Data matrix X (N x n, columns are samples) with its provenance."""
    X: np.ndarray
    M: Optional[int] = None  # dimension of the generating y_i, if known
    provenance: dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        if self.X.ndim != 2:
            raise DomainError(f"Sample matrix must be two dimensional, got shape {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise DomainError("Sample matrix contains non finite entries")
        if self.M is not None and self.M < self.N:
            raise DomainError(f"Generator dimension M={self.M} smaller than N={self.N}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def is_complex(self) -> bool:
        return bool(np.iscomplexobj(self.X))

    @property
    def c_N(self) -> float:
        """N / n"""
        return self.N / self.n

    @property
    def c_bar_N(self) -> Optional[float]:
        """M / N"""
        return None if self.M is None else self.M / self.N

    def without(self, i: int) -> "SampleSet":
        """The same set with sample i removed."""
        return SampleSet(np.delete(self.X, i, axis=1), M=self.M, provenance=dict(self.provenance), seed=self.seed)


@dataclass
class CovarianceEstimate:
    """Solution of the robust fixed-point equation plus the solver trace."""
    matrix: np.ndarray  # Hermitian positive definite N x N
    d: np.ndarray  # converged quadratic forms (1/N) x_i* C^-1 x_i
    iterations: int
    residual: float  # max relative change of the d_i at the last step
    scale_reference: float  # phi^-1(1)
    fixed_point_residual: float = 0.0  # spectral norm of C - (1/n) sum u(d_i) x_i x_i*


@dataclass
class ValidationReport:
    valid: bool
    phi_inf: float
    violations: list[str] = field(default_factory=list)

    @property
    def first_violation(self) -> Optional[str]:
        return self.violations[0] if self.violations else None


@dataclass
class SpectrumReport:
    eigenvalues_C_hat: np.ndarray  # ascending
    eigenvalues_S_hat: np.ndarray  # ascending
    norm_gap: float  # || phi^-1(1) C_hat - S_hat ||
    spacing_max: float  # max_i | phi^-1(1) lambda_i(C_hat) - lambda_i(S_hat) |
    concentration_max: float  # max_i | (1/N) x_i* S_hat^-1 x_i - 1 |


@dataclass
class DeterministicEquivalent:
    z: float
    c_N: float
    spectrum_C: np.ndarray
    e: float
    iterations: int
    residual: float  # relative substitution residual


@dataclass
class InterlacingCheck:
    index: int
    spectrum_full: np.ndarray  # eigenvalues of (1/n) X X*
    spectrum_loo: np.ndarray  # eigenvalues of (1/n) X_(i) X_(i)*
    passed: bool


@dataclass
class TraceProbe:
    mean: float  # empirical mean of y* A y - tr A
    variance: float
    trace_aa: float  # tr A A*
    trials: int


@dataclass
class InterferenceReport:
    positive: bool
    monotone: bool
    scalable: bool

    @property
    def standard(self) -> bool:
        return self.positive and self.monotone and self.scalable


@dataclass
class ArrayScenario:
    """Uniform linear array with K far field sources."""
    N: int  # sensors
    theta: np.ndarray  # source angles in radians
    powers: np.ndarray  # p_k
    sigma2: float  # noise variance

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.powers = np.atleast_1d(np.asarray(self.powers, dtype=float))

        if self.theta.shape != self.powers.shape:
            raise DomainError(f"Got {self.theta.size} angles but {self.powers.size} powers")
        if self.K >= self.N:
            raise DomainError(f"Need fewer sources than sensors (K={self.K}, N={self.N})")
        if len(np.unique(self.theta)) != self.K:
            raise DomainError("Source angles must be distinct")
        if np.any(self.powers <= 0):
            raise DomainError("Source powers must be positive")
        if self.sigma2 <= 0:
            raise DomainError(f"Noise variance must be positive, got {self.sigma2}")

    @property
    def K(self) -> int:
        return int(self.theta.size)

    @classmethod
    def from_degrees(cls, N: int, theta_deg, powers, sigma2: float) -> "ArrayScenario":
        return cls(N=N, theta=np.deg2rad(np.asarray(theta_deg, dtype=float)), powers=powers, sigma2=sigma2)


@dataclass
class PseudoSpectrum:
    grid: np.ndarray  # ascending angles in radians
    values: np.ndarray
    kind: SpectrumKind


@dataclass
class EntryDistribution:
    """Zero mean, unit variance entry law for the y_ij."""
    kind: EntryKind
    dof: Optional[float] = None  # Student-t kinds only
    eta: float = 0.5  # the finite (8 + eta)-th moment required of the entries

    def __post_init__(self):
        self.kind = EntryKind(self.kind)
        if self.kind in (EntryKind.STUDENT_T_NORMALIZED, EntryKind.STUDENT_T_COMPLEX):
            if self.dof is None:
                raise DomainError(f"{self.kind.value} needs a dof parameter")
            if self.dof <= 8 + self.eta:
                raise MomentConditionError(
                    f"Student-t with dof={self.dof} has no finite {8 + self.eta:g}-th moment"
                )
        if self.eta <= 0:
            raise DomainError(f"eta must be positive, got {self.eta}")

    @property
    def is_complex(self) -> bool:
        return self.kind in (EntryKind.GAUSSIAN_COMPLEX, EntryKind.QPSK, EntryKind.STUDENT_T_COMPLEX)

    @property
    def variance(self) -> float:
        return 1.0

    @property
    def fourth_moment(self) -> float:
        """E|y|^4"""
        if self.kind == EntryKind.GAUSSIAN_COMPLEX:
            return 2.0
        if self.kind == EntryKind.GAUSSIAN_REAL:
            return 3.0
        if self.kind == EntryKind.QPSK:
            return 1.0

        kurtosis = 3.0 * (self.dof - 2) / (self.dof - 4)
        if self.kind == EntryKind.STUDENT_T_NORMALIZED:
            return kurtosis
        return (kurtosis + 1.0) / 2.0


@dataclass
class CovarianceModel:
    kind: CovarianceKind
    scale: float = 1.0  # scaled_identity level, or base level of spiked
    rho: float = 0.0  # toeplitz correlation in [0, 1)
    spikes: tuple[float, ...] = ()

    def __post_init__(self):
        self.kind = CovarianceKind(self.kind)
        self.spikes = tuple(float(s) for s in self.spikes)
        if self.scale <= 0:
            raise DomainError(f"Covariance scale must be positive, got {self.scale}")
        if not 0 <= self.rho < 1:
            raise DomainError(f"Toeplitz correlation must lie in [0, 1), got {self.rho}")
        if any(s <= 0 for s in self.spikes):
            raise DomainError("Spike values must be positive")


@dataclass
class ExperimentConfig:
    """One JSON experiment document."""
    experiment: ExperimentKind
    dims: list[tuple[int, int]]  # (N, n) pairs
    model: CovarianceModel
    dist: EntryDistribution
    weight: "WeightFunction"
    trials: int = 20
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 500
    grid_deg: float = 0.1  # DOA grid step
    z: float = -1.0  # evaluation point of e_N(z)
    support_margin: float = 0.15
    # doa_compare scenario
    angles_deg: tuple[float, ...] = (-10.0, 15.0)
    powers: tuple[float, ...] = (1.0, 1.0)
    sigma2: float = 0.1
    noise: Optional[EntryDistribution] = None  # defaults to dist


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    N: int
    n: int
    trial: int
    metric_name: str
    value: float


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    aggregates: dict[str, tuple[float, float, float]] = field(default_factory=dict)  # median, p05, p95
    config_echo: dict[str, Any] = field(default_factory=dict)
    summary: dict[str, float] = field(default_factory=dict)
    runtime_seconds: float = field(default=0.0, compare=False)

    def values(self, metric_name: str, N: Optional[int] = None, n: Optional[int] = None) -> np.ndarray:
        """All values of one metric, optionally restricted to one (N, n) pair."""
        return np.array([
            r.value for r in self.rows
            if r.metric_name == metric_name and (N is None or r.N == N) and (n is None or r.n == n)
        ], dtype=float)

    def median(self, metric_name: str, N: Optional[int] = None, n: Optional[int] = None) -> float:
        return float(np.median(self.values(metric_name, N, n)))
