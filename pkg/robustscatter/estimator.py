"""
Sample covariance and the robust M-estimator of scatter.

The robust estimate C_hat solves

    C = (1/n) sum_i u((1/N) x_i* C^-1 x_i) x_i x_i*

and is found by iterating the right hand side from Z = I_N. The same
solution is characterized in q-space by the interference functions

    h_j(q) = (1/N) x_j* ((1/n) sum_i u(q_i) x_i x_i*)^-1 x_j

whose fixed point q* is the vector of converged quadratic forms d_i.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from robustscatter.errors import (
    DimensionError,
    DomainError,
    NonConvergenceError,
    SingularMatrixError,
    SpanError,
)
from robustscatter.scatterSettings import CovarianceEstimate, InterferenceReport, SampleSet
from robustscatter.weights import WeightFunction

logger = logging.getLogger(__name__)

Samples = Union[SampleSet, np.ndarray]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
# smallest admissible lambda_min / lambda_max of S_hat
SPAN_FLOOR = 1e-12


def _data(S: Samples) -> np.ndarray:
    X = S.X if isinstance(S, SampleSet) else np.asarray(S)
    if X.ndim != 2:
        raise DimensionError(f"Sample matrix must be two dimensional, got shape {X.shape}")
    return X


def _hermitian(A: np.ndarray) -> np.ndarray:
    return (A + A.conj().T) / 2


def weighted_scatter(X: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(1/n) sum_i weights_i x_i x_i*"""
    n = X.shape[1]
    return _hermitian((X * weights) @ X.conj().T / n)


def sample_covariance(S: Samples) -> np.ndarray:
    """S_hat = (1/n) X X*"""
    X = _data(S)
    if X.shape[1] == 0:
        raise DomainError("Cannot form a sample covariance from an empty sample set")
    return weighted_scatter(X, np.ones(X.shape[1]))


def quadratic_forms(S: Samples, Z: np.ndarray) -> np.ndarray:
    """d_i = (1/N) x_i* Z^-1 x_i for every column, from one Cholesky factorization of Z."""

    X = _data(S)
    N = X.shape[0]
    Z = np.asarray(Z)
    if Z.shape != (N, N):
        raise DimensionError(f"Expected a {N}x{N} matrix, got shape {Z.shape}")

    try:
        factor = linalg.cho_factor(Z, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"Matrix is not positive definite: {e}") from e

    solved = linalg.cho_solve(factor, X)
    d = np.real(np.sum(X.conj() * solved, axis=0)) / N
    return np.maximum(d, 0.0)


def check_span(S: Samples) -> None:
    """Raise unless N < n and the columns of X span the observation space."""

    X = _data(S)
    N, n = X.shape
    if N >= n:
        raise DomainError(f"Robust estimation needs more samples than dimensions (N={N}, n={n})")

    eig = linalg.eigvalsh(sample_covariance(X))
    if eig[-1] <= 0 or eig[0] <= SPAN_FLOOR * eig[-1]:
        raise SpanError(f"Samples do not span the space (eigenvalue ratio {eig[0] / max(eig[-1], 1e-300):.3e})")


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old) / np.maximum(1.0, old)))


def robust_fixed_point(
    S: Samples,
    w: WeightFunction,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: Optional[np.ndarray] = None,
) -> CovarianceEstimate:
    """Solve the robust fixed-point equation by iterating from Z = initial (I_N by default).

    Stops once the largest relative change max_i |d_i' - d_i| / max(1, d_i)
    drops to tol and raises NonConvergenceError after max_iter steps.
    """

    X = _data(S)
    check_span(X)
    N, n = X.shape

    Z = np.eye(N, dtype=X.dtype) if initial is None else _hermitian(np.asarray(initial))
    d = quadratic_forms(X, Z)
    residual = np.inf

    for iteration in range(1, max_iter + 1):
        Z = weighted_scatter(X, w.u(d))
        d_next = quadratic_forms(X, Z)
        residual = _relative_change(d_next, d)
        d = d_next
        logger.debug("fixed point step %d: residual %.3e", iteration, residual)

        if residual <= tol:
            break
    else:
        raise NonConvergenceError(f"Robust estimator did not converge for N={N}, n={n}", residual, max_iter)

    fixed_point_residual = float(np.linalg.norm(Z - weighted_scatter(X, w.u(d)), 2))

    return CovarianceEstimate(
        matrix=Z,
        d=d,
        iterations=iteration,
        residual=residual,
        scale_reference=w.phi_inverse(1.0),
        fixed_point_residual=fixed_point_residual,
    )


def interference_function(S: Samples, w: WeightFunction, q: np.ndarray) -> np.ndarray:
    """One evaluation of h(q) = (h_1(q), ..., h_n(q))."""

    X = _data(S)
    q = np.asarray(q, dtype=float)
    if q.shape != (X.shape[1],):
        raise DimensionError(f"Expected {X.shape[1]} entries in q, got shape {q.shape}")
    return quadratic_forms(X, weighted_scatter(X, w.u(q)))


def interference_iterate(
    S: Samples,
    w: WeightFunction,
    q0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    on_step: Optional[Callable[[int, np.ndarray], None]] = None,
) -> np.ndarray:
    """Iterate q <- h(q) from q0 and return the fixed point.

    From a feasible q0 (q0 >= h(q0)) every entry decreases monotonically.
    on_step(t, q) sees each iterate.
    """

    X = _data(S)
    q = np.asarray(q0, dtype=float)
    if np.any(q <= 0):
        raise DomainError("Starting point of the interference iteration must be strictly positive")
    check_span(X)

    residual = np.inf
    for iteration in range(1, max_iter + 1):
        q_next = interference_function(X, w, q)
        residual = _relative_change(q_next, q)
        q = q_next
        if on_step is not None:
            on_step(iteration, q)

        if residual <= tol:
            logger.debug("interference iteration converged after %d steps", iteration)
            return q

    raise NonConvergenceError("Interference iteration did not converge", residual, max_iter)


def feasible_start(S: Samples, w: WeightFunction, margin: float = 0.05) -> np.ndarray:
    """The constant vector q with phi(q) = phi_inf - margin.

    Such a q is feasible exactly when (1/N) x_j* S_hat^-1 x_j <= phi_inf - margin
    for every j; check with is_feasible.
    """

    if not 0 < margin < w.phi_inf:
        raise DomainError(f"margin must lie in (0, {w.phi_inf}), got {margin}")

    X = _data(S)
    return np.full(X.shape[1], w.phi_inverse(w.phi_inf - margin))


def is_feasible(S: Samples, w: WeightFunction, q: np.ndarray, rtol: float = 1e-12) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(interference_function(S, w, q) <= q * (1 + rtol)))


def check_interference_properties(
    S: Samples,
    w: WeightFunction,
    q: np.ndarray,
    q_low: Optional[np.ndarray] = None,
    alpha: float = 2.0,
    rtol: float = 1e-10,
) -> InterferenceReport:
    """Numerical check that h is a standard interference function at q.

    positive: h(q) > 0
    monotone: h(q) >= h(q_low) for q_low <= q (q / 2 when not given)
    scalable: alpha h(q) >= h(alpha q) for alpha > 1
    """

    if not alpha > 1:
        raise DomainError(f"Scalability is checked for alpha > 1, got {alpha}")

    q = np.asarray(q, dtype=float)
    q_low = q / 2 if q_low is None else np.asarray(q_low, dtype=float)
    if np.any(q_low > q):
        raise DomainError("q_low must be entrywise below q")

    h = interference_function(S, w, q)
    h_low = interference_function(S, w, q_low)
    h_scaled = interference_function(S, w, alpha * q)

    return InterferenceReport(
        positive=bool(np.all(h > 0)),
        monotone=bool(np.all(h >= h_low * (1 - rtol))),
        scalable=bool(np.all(alpha * h >= h_scaled * (1 - rtol))),
    )


def scaled_estimate(e: CovarianceEstimate, w: WeightFunction) -> np.ndarray:
    """phi^-1(1) C_hat, the matrix that tracks S_hat in large dimensions."""
    return w.phi_inverse(1.0) * e.matrix
