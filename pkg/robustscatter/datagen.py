"""
Random samples x_i = A_N y_i with independent, zero mean, unit variance
entries y_ij, population covariance factories, and array snapshots.

Random streams: a batch uses one master seed and derives the stream of
each trial with trial_rng(seed, stream), a counter based split of the seed
sequence. Equal (seed, stream) pairs always produce equal draws.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import linalg

from robustscatter.doa import steering_matrix
from robustscatter.errors import ConfigError, DomainError
from robustscatter.scatterSettings import (
    ArrayScenario,
    CovarianceKind,
    CovarianceModel,
    EntryDistribution,
    EntryKind,
    SampleSet,
)

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator]

SAMPLES_HEADER = ["N", "n", "M", "kind", "seed"]


def trial_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one trial of a batch."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_entries(dist: EntryDistribution, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    kind = dist.kind

    if kind == EntryKind.GAUSSIAN_REAL:
        return rng.standard_normal(shape)
    if kind == EntryKind.GAUSSIAN_COMPLEX:
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    if kind == EntryKind.QPSK:
        return np.exp(1j * np.pi * (2 * rng.integers(0, 4, size=shape) + 1) / 4)

    scale = np.sqrt((dist.dof - 2) / dist.dof)
    if kind == EntryKind.STUDENT_T_NORMALIZED:
        return scale * rng.standard_t(dist.dof, size=shape)
    if kind == EntryKind.STUDENT_T_COMPLEX:
        re = rng.standard_t(dist.dof, size=shape)
        im = rng.standard_t(dist.dof, size=shape)
        return scale * (re + 1j * im) / np.sqrt(2)

    raise DomainError(f"Unknown entry distribution {kind}")


def generate_y(dist: EntryDistribution, M: int, n: int, seed: Seed) -> np.ndarray:
    """M x n matrix of independent entries drawn from dist."""
    if M < 1 or n < 1:
        raise DomainError(f"Need M, n >= 1, got M={M}, n={n}")
    return draw_entries(dist, (M, n), _rng(seed))


def model_bounds(model: CovarianceModel, N: int) -> tuple[float, float]:
    """Declared eigenvalue range [C_minus, C_plus] of the model's C_N."""

    if model.kind == CovarianceKind.IDENTITY:
        return 1.0, 1.0
    if model.kind == CovarianceKind.SCALED_IDENTITY:
        return model.scale, model.scale
    if model.kind == CovarianceKind.TOEPLITZ:
        # extremes of the symbol (1 - rho^2) / |1 - rho e^{iw}|^2
        return (1 - model.rho) / (1 + model.rho), (1 + model.rho) / (1 - model.rho)

    values = model.spikes + ((model.scale,) if len(model.spikes) < N else ())
    return min(values), max(values)


def population_covariance(model: CovarianceModel, N: int) -> np.ndarray:
    if model.kind == CovarianceKind.IDENTITY:
        return np.eye(N)
    if model.kind == CovarianceKind.SCALED_IDENTITY:
        return model.scale * np.eye(N)
    if model.kind == CovarianceKind.TOEPLITZ:
        return linalg.toeplitz(model.rho ** np.arange(N))

    if len(model.spikes) > N:
        raise DomainError(f"{len(model.spikes)} spikes do not fit in dimension {N}")
    diagonal = np.full(N, model.scale)
    if model.spikes:
        diagonal[N - len(model.spikes):] = sorted(model.spikes)
    return np.diag(diagonal)


def _sqrt_psd(C: np.ndarray) -> np.ndarray:
    if np.count_nonzero(C - np.diag(np.diag(C))) == 0:
        return np.diag(np.sqrt(np.diag(C)))
    w, V = linalg.eigh(C)
    return (V * np.sqrt(np.maximum(w, 0))) @ V.conj().T


def build_covariance(model: CovarianceModel, N: int, M: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (A_N, C_N) with A_N = [C_N^(1/2), 0] of shape N x M."""

    M = N if M is None else M
    if M < N:
        raise DomainError(f"Generator dimension M={M} smaller than N={N}")

    C = population_covariance(model, N)
    A = np.zeros((N, M), dtype=C.dtype)
    A[:, :N] = _sqrt_psd(C)
    return A, C


def generate_samples(
    model: CovarianceModel,
    dist: EntryDistribution,
    N: int,
    M: Optional[int],
    n: int,
    seed: Seed,
) -> SampleSet:
    M = N if M is None else M
    A, _ = build_covariance(model, N, M)
    Y = generate_y(dist, M, n, seed)

    return SampleSet(
        X=A @ Y,
        M=M,
        provenance={"model": model.kind.value, "dist": dist.kind.value, "dof": dist.dof},
        seed=seed if isinstance(seed, int) else None,
    )


def generate_snapshots(
    scn: ArrayScenario,
    n: int,
    source_dist: EntryDistribution,
    noise_dist: EntryDistribution,
    seed: Seed,
) -> tuple[SampleSet, np.ndarray]:
    """Array snapshots x_i = sum_k sqrt(p_k) s(theta_k) z_ki + sigma w_i.

    Returns the samples and the factor A_N = [S(theta) P^(1/2), sigma I_N].
    """

    rng = _rng(seed)
    signal = steering_matrix(scn.theta, scn.N) * np.sqrt(scn.powers)
    A = np.hstack([signal, np.sqrt(scn.sigma2) * np.eye(scn.N)])

    Z = draw_entries(source_dist, (scn.K, n), rng)
    W = draw_entries(noise_dist, (scn.N, n), rng)
    X = signal @ Z + np.sqrt(scn.sigma2) * W

    samples = SampleSet(
        X=X,
        M=scn.N + scn.K,
        provenance={"source": source_dist.kind.value, "noise": noise_dist.kind.value, "K": scn.K},
        seed=seed if isinstance(seed, int) else None,
    )
    return samples, A


def write_samples_csv(S: SampleSet, path: Union[str, Path]) -> None:
    """Header N,n,M,kind,seed, one metadata row, then one row per sensor.

    Complex rows interleave real and imaginary parts.
    """

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SAMPLES_HEADER)
        writer.writerow([S.N, S.n, "" if S.M is None else S.M, "complex" if S.is_complex else "real",
                         "" if S.seed is None else S.seed])

        for row in S.X:
            if S.is_complex:
                values = np.column_stack([row.real, row.imag]).ravel()
            else:
                values = row
            writer.writerow([repr(float(v)) for v in values])


def read_samples_csv(path: Union[str, Path]) -> SampleSet:
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if row]

    if len(rows) < 2 or rows[0] != SAMPLES_HEADER:
        raise ConfigError([f"{path}: expected header {','.join(SAMPLES_HEADER)} and a metadata row"])

    N_field, n_field, M_field, kind, seed_field = rows[1]
    problems = []
    try:
        N, n = int(N_field), int(n_field)
    except ValueError:
        raise ConfigError([f"{path}: N and n must be integers"])

    if kind not in ("real", "complex"):
        problems.append(f"{path}: kind must be real or complex, got {kind!r}")
    if len(rows) - 2 != N:
        problems.append(f"{path}: expected {N} data rows, found {len(rows) - 2}")
    width = 2 * n if kind == "complex" else n
    if any(len(r) != width for r in rows[2:]):
        problems.append(f"{path}: every data row must hold {width} values")
    if problems:
        raise ConfigError(problems)

    try:
        values = np.array(rows[2:], dtype=float)
    except ValueError:
        raise ConfigError([f"{path}: data rows must be numeric"])
    X = values[:, 0::2] + 1j * values[:, 1::2] if kind == "complex" else values

    logger.debug("read %dx%d %s samples from %s", N, n, kind, path)
    return SampleSet(
        X=X,
        M=int(M_field) if M_field else None,
        provenance={"file": str(path)},
        seed=int(seed_field) if seed_field else None,
    )
