"""
Random matrix diagnostics.

Deterministic equivalent e_N(z), spectral gaps between the scaled robust
estimate and the sample covariance, concentration of the quadratic forms,
leave-one-out interlacing, and numerical checks of the matrix identities
used by the large dimensional analysis. Asymptotic statements are exposed
as measurements; only exact identities raise.
"""

from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np
from scipy import linalg

from robustscatter.datagen import draw_entries, trial_rng
from robustscatter.errors import (
    DimensionError,
    DomainError,
    IdentityViolationError,
    NonConvergenceError,
    SingularMatrixError,
)
from robustscatter.estimator import quadratic_forms, sample_covariance
from robustscatter.scatterSettings import (
    CovarianceEstimate,
    DeterministicEquivalent,
    EntryDistribution,
    InterlacingCheck,
    SampleSet,
    SpectrumReport,
    TraceProbe,
)

logger = logging.getLogger(__name__)

Samples = Union[SampleSet, np.ndarray]

# eigen solver slack for exact eigenvalue inequalities
EIGEN_SLACK = 1e-10


def _eN_rhs(e: float, z: float, c_N: float, t: np.ndarray) -> float:
    return float(np.mean(t / (t / (1 + c_N * e) - z)))


def solve_eN(
    z: float,
    c_N: float,
    spectrum_C,
    tol: float = 1e-13,
    max_iter: int = 10000,
    damping: float = 0.5,
) -> DeterministicEquivalent:
    """Unique positive solution of e = mean_t t / (t / (1 + c_N e) - z) for z < 0.

    Damped fixed point e <- (1 - damping) e + damping rhs(e) started at e = 1;
    stops when |rhs(e) - e| <= tol e.
    """

    t = np.asarray(spectrum_C, dtype=float)
    if not z < 0:
        raise DomainError(f"e_N(z) is solved for z < 0, got z={z}")
    if not 0 < c_N < 1:
        raise DomainError(f"c_N must lie in (0, 1), got {c_N}")
    if t.size == 0 or np.any(t < 0):
        raise DomainError("Population spectrum must be a nonempty list of nonnegative values")
    if not 0 < damping <= 1:
        raise DomainError(f"damping must lie in (0, 1], got {damping}")

    e = 1.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        rhs = _eN_rhs(e, z, c_N, t)
        residual = abs(rhs - e) / e
        if residual <= tol:
            break
        e = (1 - damping) * e + damping * rhs
    else:
        raise NonConvergenceError(f"e_N({z}) did not converge", residual, max_iter)

    return DeterministicEquivalent(z=z, c_N=c_N, spectrum_C=t, e=e, iterations=iteration, residual=residual)


def resolvent_trace(S_hat: np.ndarray, C: np.ndarray, z: float) -> float:
    """(1/N) tr C (S_hat - z I)^-1, the quantity e_N(z) tracks."""

    if not z < 0:
        raise DomainError(f"Resolvent evaluated for z < 0, got z={z}")
    if S_hat.shape != C.shape:
        raise DimensionError(f"Shapes {S_hat.shape} and {C.shape} differ")

    N = S_hat.shape[0]
    R_C = linalg.solve(S_hat - z * np.eye(N), C, assume_a="her")
    return float(np.real(np.trace(R_C))) / N


def spectral_norm_gap(A: np.ndarray, B: np.ndarray) -> float:
    """Largest absolute eigenvalue of the Hermitian difference A - B."""

    A, B = np.asarray(A), np.asarray(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Need square matrices of equal size, got {A.shape} and {B.shape}")
    D = A - B
    return float(np.max(np.abs(linalg.eigvalsh((D + D.conj().T) / 2))))


def eigenvalue_spacing(C_hat: np.ndarray, S_hat: np.ndarray, scale: float = 1.0) -> tuple[float, np.ndarray]:
    """max_i |scale lambda_i(C_hat) - lambda_i(S_hat)| and the per index values."""

    if C_hat.shape != S_hat.shape:
        raise DimensionError(f"Shapes {C_hat.shape} and {S_hat.shape} differ")

    spacing = np.abs(scale * linalg.eigvalsh(C_hat) - linalg.eigvalsh(S_hat))
    return float(np.max(spacing)), spacing


def quadratic_concentration(S: Samples) -> tuple[float, np.ndarray]:
    """max_i |(1/N) x_i* S_hat^-1 x_i - 1| and the per sample deviations."""

    deviation = np.abs(quadratic_forms(S, sample_covariance(S)) - 1.0)
    return float(np.max(deviation)), deviation


def spectrum_report(S: Samples, estimate: CovarianceEstimate) -> SpectrumReport:
    S_hat = sample_covariance(S)
    scale = estimate.scale_reference

    norm_gap = spectral_norm_gap(scale * estimate.matrix, S_hat)
    spacing_max, _ = eigenvalue_spacing(estimate.matrix, S_hat, scale)
    if spacing_max > norm_gap + EIGEN_SLACK * max(1.0, norm_gap):
        raise IdentityViolationError(f"Eigenvalue spacing {spacing_max} exceeds the norm gap {norm_gap}")

    concentration_max, _ = quadratic_concentration(S)

    return SpectrumReport(
        eigenvalues_C_hat=linalg.eigvalsh(estimate.matrix),
        eigenvalues_S_hat=linalg.eigvalsh(S_hat),
        norm_gap=norm_gap,
        spacing_max=spacing_max,
        concentration_max=concentration_max,
    )


def _data(S: Samples) -> np.ndarray:
    return S.X if isinstance(S, SampleSet) else np.asarray(S)


def leave_one_out_interlacing(S: Samples, i: int) -> InterlacingCheck:
    """Compare the spectra of (1/n) X X* and (1/n) X_(i) X_(i)* for 0 based column i.

    Removing one rank one term gives
    lambda_k(loo) <= lambda_k(full) <= lambda_{k+1}(loo).
    """

    S = S if isinstance(S, SampleSet) else SampleSet(np.asarray(S))
    X, n = S.X, S.n
    if not 0 <= i < n:
        raise DomainError(f"Column index {i} out of range for n={n}")

    full = linalg.eigvalsh(X @ X.conj().T / n)
    Xi = S.without(i).X
    loo = linalg.eigvalsh(Xi @ Xi.conj().T / n)

    slack = EIGEN_SLACK * max(1.0, full[-1])
    passed = bool(np.all(loo <= full + slack) and np.all(full[:-1] <= loo[1:] + slack))
    return InterlacingCheck(index=i, spectrum_full=full, spectrum_loo=loo, passed=passed)


def min_leave_one_out_eigenvalue(S: Samples) -> float:
    """min_i lambda_1((1/n) X_(i) X_(i)*)"""

    X = _data(S)
    n = X.shape[1]
    S_hat = X @ X.conj().T / n
    smallest = [
        linalg.eigvalsh(S_hat - np.outer(X[:, i], X[:, i].conj()) / n, subset_by_index=[0, 0])[0]
        for i in range(n)
    ]
    return float(min(smallest))


def mil_check(A: np.ndarray, x: np.ndarray, t: float) -> float:
    """|x* (A + t x x*)^-1 x - x* A^-1 x / (1 + t x* A^-1 x)|

    Raises IdentityViolationError if the residual exceeds 1e-12 (1 + |x* A^-1 x|).
    """

    x = np.asarray(x)
    try:
        q = np.real(np.vdot(x, linalg.solve(A, x, assume_a="her")))
        lhs = np.real(np.vdot(x, linalg.solve(A + t * np.outer(x, x.conj()), x, assume_a="her")))
    except linalg.LinAlgError as e:
        raise SingularMatrixError(str(e)) from e

    residual = float(abs(lhs - q / (1 + t * q)))
    if not residual <= 1e-12 * (1 + abs(q)):
        raise IdentityViolationError(f"Inversion lemma residual {residual} exceeds 1e-12 (1 + {abs(q)})")
    return residual


def rank_one_perturbation_gap(B: np.ndarray, A: np.ndarray, v: np.ndarray, x: float) -> tuple[float, float]:
    """|tr B (A + v v* + x I)^-1 - tr B (A + x I)^-1| and its bound ||B|| / x.

    Raises IdentityViolationError if the bound fails.
    """

    if not x > 0:
        raise DomainError(f"Need x > 0, got {x}")

    B, A = np.atleast_2d(B), np.atleast_2d(A)
    v = np.atleast_1d(v)
    shifted = A + x * np.eye(A.shape[0])

    perturbed = np.trace(linalg.solve(shifted + np.outer(v, v.conj()), B, assume_a="her"))
    base = np.trace(linalg.solve(shifted, B, assume_a="her"))
    gap = float(abs(perturbed - base))
    bound = float(linalg.norm(B, 2)) / x

    if gap > bound * (1 + 1e-12) + 1e-15:
        raise IdentityViolationError(f"Rank one perturbation gap {gap} exceeds bound {bound}")
    return gap, bound


def trace_concentration_probe(
    A: np.ndarray,
    dist: EntryDistribution,
    trials: int,
    rng: Optional[np.random.Generator] = None,
) -> TraceProbe:
    """Empirical mean and variance of y* A y - tr A over random y with entries from dist."""

    A = np.atleast_2d(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"Need a square matrix, got {A.shape}")
    if trials < 1:
        raise DomainError(f"Need at least one trial, got {trials}")
    if dist.variance != 1.0:
        raise DomainError("Trace probe needs unit variance entries")

    rng = trial_rng(0) if rng is None else rng
    Y = draw_entries(dist, (A.shape[0], trials), rng)
    values = np.real(np.sum(Y.conj() * (A @ Y), axis=0)) - np.real(np.trace(A))

    return TraceProbe(
        mean=float(np.mean(values)),
        variance=float(np.var(values, ddof=1)) if trials > 1 else 0.0,
        trace_aa=float(np.real(np.trace(A @ A.conj().T))),
        trials=trials,
    )


def trace_variance_ratio(
    dist: EntryDistribution,
    N_small: int = 50,
    N_large: int = 200,
    trials: int = 500,
    seed: int = 0,
) -> float:
    """Variance of y* (I/N) y - 1 at N_small over that at N_large; about N_large / N_small."""

    small = trace_concentration_probe(np.eye(N_small) / N_small, dist, trials, trial_rng(seed, 0))
    large = trace_concentration_probe(np.eye(N_large) / N_large, dist, trials, trial_rng(seed, 1))
    return small.variance / large.variance


def mp_edges(c: float, scale: float = 1.0) -> tuple[float, float]:
    """Support edges scale (1 -+ sqrt(c))^2 of the limiting spectrum for C_N = scale I."""
    if not 0 < c < 1:
        raise DomainError(f"c must lie in (0, 1), got {c}")
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    return scale * (1 - np.sqrt(c)) ** 2, scale * (1 + np.sqrt(c)) ** 2


def support_check(S_hat: np.ndarray, c: float, scale: float = 1.0, margin: float = 0.15) -> bool:
    """Whether every eigenvalue of S_hat lies within margin of the support edges."""
    lower, upper = mp_edges(c, scale)
    eig = linalg.eigvalsh(S_hat)
    return bool(eig[0] >= lower - margin and eig[-1] <= upper + margin)
