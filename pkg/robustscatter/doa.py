"""
Direction of arrival estimation on a half-wavelength uniform linear array.

Pseudo-spectra: the MUSIC metric built from the true noise subspace, the
classical empirical MUSIC, G-MUSIC and its robust variant that feeds the
robust scatter estimate to G-MUSIC in place of the sample covariance.
Angles are in radians throughout; degrees only appear in files and in
angle_mse.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy import linalg, stats

from robustscatter.errors import (
    DegenerateScenarioError,
    DegenerateSpectrumError,
    DetectionFailureError,
    DimensionError,
    DomainError,
)
from robustscatter.estimator import DEFAULT_MAX_ITER, DEFAULT_TOL, robust_fixed_point
from robustscatter.scatterSettings import ArrayScenario, PseudoSpectrum, SampleSet, SpectrumKind
from robustscatter.weights import WeightFunction

logger = logging.getLogger(__name__)

# coarsest grid estimate_angles accepts
MAX_GRID_STEP_DEG = 0.25


def steering_vector(theta: float, N: int) -> np.ndarray:
    """s(theta)_m = exp(i pi m sin theta) / sqrt(N), m = 0..N-1"""
    if N < 1:
        raise DomainError(f"Need at least one sensor, got N={N}")
    return np.exp(1j * np.pi * np.arange(N) * np.sin(theta)) / np.sqrt(N)


def steering_matrix(thetas, N: int) -> np.ndarray:
    """N x K matrix with columns s(theta_k)."""
    if N < 1:
        raise DomainError(f"Need at least one sensor, got N={N}")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.exp(1j * np.pi * np.outer(np.arange(N), np.sin(thetas))) / np.sqrt(N)


def scenario_covariance(scn: ArrayScenario) -> np.ndarray:
    """C_N = S(theta) P S(theta)* + sigma^2 I"""
    S = steering_matrix(scn.theta, scn.N)
    C = (S * scn.powers) @ S.conj().T + scn.sigma2 * np.eye(scn.N)
    return (C + C.conj().T) / 2


def _projections(E: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """|e_i* s(theta)|^2 for every column e_i and grid angle, shape (columns, grid)."""
    return np.abs(E.conj().T @ steering_matrix(grid, E.shape[0])) ** 2


def true_music_spectrum(scn: ArrayScenario, grid) -> PseudoSpectrum:
    """gamma(theta) = s(theta)* E_W E_W* s(theta), E_W the sigma^2 eigenspace of C_N."""

    grid = np.asarray(grid, dtype=float)
    w, V = linalg.eigh(scenario_covariance(scn))

    noise_dim = int(np.sum(np.abs(w - scn.sigma2) <= 1e-10 * max(1.0, w[-1])))
    if noise_dim != scn.N - scn.K:
        raise DegenerateScenarioError(
            f"Noise eigenspace has dimension {noise_dim}, expected N - K = {scn.N - scn.K}"
        )

    values = _projections(V[:, :noise_dim], grid).sum(axis=0)
    return PseudoSpectrum(grid=grid, values=values, kind=SpectrumKind.TRUE_MUSIC)


def _check_order(N: int, K: int) -> None:
    if not 0 <= K < N:
        raise DomainError(f"Need 0 <= K < N, got K={K}, N={N}")


def music_spectrum(M: np.ndarray, K: int, grid) -> PseudoSpectrum:
    """Classical MUSIC using the N - K smallest eigenvectors of an estimate."""

    grid = np.asarray(grid, dtype=float)
    N = M.shape[0]
    _check_order(N, K)

    _, V = linalg.eigh((M + M.conj().T) / 2)
    values = _projections(V[:, :N - K], grid).sum(axis=0)
    return PseudoSpectrum(grid=grid, values=values, kind=SpectrumKind.EMPIRICAL_MUSIC)


def gmusic_weights(lambda_hat, n: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """G-MUSIC weights beta and the eigenvalues mu_hat of diag(l) - sqrt(l) sqrt(l)^T / n.

    With 0 based indices and noise group i < N - K:

        beta_i = 1 + sum_{k >= N-K} (l_k / (l_i - l_k) - mu_k / (l_i - mu_k))   for i < N - K
        beta_i =   - sum_{k <  N-K} (l_k / (l_i - l_k) - mu_k / (l_i - mu_k))   otherwise
    """

    lam = np.asarray(lambda_hat, dtype=float)
    if lam.ndim != 1:
        raise DimensionError("Eigenvalues must be a vector")
    N = lam.size
    _check_order(N, K)
    if np.any(lam <= 0):
        raise DomainError("G-MUSIC needs strictly positive eigenvalues")
    if np.any(np.diff(lam) < 0):
        raise DomainError("Eigenvalues must be sorted ascending")
    if n <= N:
        raise DomainError(f"G-MUSIC needs n > N (N={N}, n={n})")

    root = np.sqrt(lam)
    mu = linalg.eigvalsh(np.diag(lam) - np.outer(root, root) / n)

    noise = N - K
    floor = 1e-12 * lam[-1]
    beta = np.empty(N)
    for i in range(N):
        others = range(noise, N) if i < noise else range(noise)
        total = 0.0
        for k in others:
            for den in (lam[i] - lam[k], lam[i] - mu[k]):
                if abs(den) <= floor:
                    raise DegenerateSpectrumError(i, k, float(lam[i]))
            total += lam[k] / (lam[i] - lam[k]) - mu[k] / (lam[i] - mu[k])
        beta[i] = 1.0 + total if i < noise else -total

    return beta, mu


def gmusic_spectrum(M: np.ndarray, n: int, K: int, grid, kind: SpectrumKind = SpectrumKind.GMUSIC) -> PseudoSpectrum:
    """gamma_hat(theta) = sum_i beta_i |e_i* s(theta)|^2 from the eigenpairs of M.

    Invariant under M -> a M for a > 0, so M may be S_hat or C_hat at any scale.
    """

    grid = np.asarray(grid, dtype=float)
    w, V = linalg.eigh((M + M.conj().T) / 2)
    beta, _ = gmusic_weights(w, n, K)

    values = beta @ _projections(V, grid)
    return PseudoSpectrum(grid=grid, values=values, kind=kind)


def robust_gmusic_spectrum(
    S: SampleSet,
    w: WeightFunction,
    K: int,
    grid,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PseudoSpectrum:
    estimate = robust_fixed_point(S, w, tol=tol, max_iter=max_iter)
    return gmusic_spectrum(estimate.matrix, S.n, K, grid, kind=SpectrumKind.ROBUST_GMUSIC)


def estimate_angles(ps: PseudoSpectrum, K: int) -> np.ndarray:
    """The K deepest local minima, refined by a parabola through three grid points, ascending."""

    grid, values = ps.grid, ps.values
    if K < 1:
        raise DomainError(f"Need K >= 1, got {K}")
    if grid.size < 3 or np.max(np.diff(grid)) > np.deg2rad(MAX_GRID_STEP_DEG) * (1 + 1e-9):
        raise DomainError(f"Angle grid must be finer than {MAX_GRID_STEP_DEG} degrees")

    inner = np.arange(1, grid.size - 1)
    minima = inner[(values[inner] < values[inner - 1]) & (values[inner] <= values[inner + 1])]
    if minima.size < K:
        raise DetectionFailureError(f"Found {minima.size} local minima, need {K}")

    angles, depths = [], []
    for i in minima:
        x = grid[i - 1:i + 2] - grid[i]
        a, b, c = np.polyfit(x, values[i - 1:i + 2], 2)
        if a > 0:
            offset = np.clip(-b / (2 * a), x[0], x[2])
            angles.append(grid[i] + offset)
            depths.append(np.polyval((a, b, c), offset))
        else:
            angles.append(grid[i])
            depths.append(values[i])

    deepest = np.argsort(depths, kind="stable")[:K]
    return np.sort(np.asarray(angles)[deepest])


def angle_mse(estimates, truth) -> float:
    """Mean squared angle error in degrees^2, after sorting both sets."""
    estimates = np.sort(np.atleast_1d(np.asarray(estimates, dtype=float)))
    truth = np.sort(np.atleast_1d(np.asarray(truth, dtype=float)))
    if estimates.shape != truth.shape:
        raise DimensionError(f"Got {estimates.size} estimates for {truth.size} angles")
    return float(np.mean(np.rad2deg(estimates - truth) ** 2))


def sign_test(wins: int, trials: int) -> float:
    """One sided binomial p-value of at least `wins` successes out of `trials` fair coin flips."""
    if trials < 1 or not 0 <= wins <= trials:
        raise DomainError(f"Invalid sign test counts wins={wins}, trials={trials}")
    return float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue)


def write_spectrum_csv(ps: PseudoSpectrum, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["theta_deg", "value", "kind"])
        for theta, value in zip(np.rad2deg(ps.grid), ps.values):
            writer.writerow([repr(float(theta)), repr(float(value)), ps.kind.value])
