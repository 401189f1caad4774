import numpy as np
import pytest

from robustscatter.datagen import generate_samples, trial_rng
from robustscatter.errors import (
    DimensionError,
    DomainError,
    NonConvergenceError,
    SingularMatrixError,
    SpanError,
)
from robustscatter.estimator import (
    check_interference_properties,
    feasible_start,
    interference_function,
    interference_iterate,
    is_feasible,
    quadratic_forms,
    robust_fixed_point,
    sample_covariance,
    scaled_estimate,
)
from robustscatter.scatterSettings import CovarianceKind, CovarianceModel, EntryDistribution, EntryKind, SampleSet
from robustscatter.weights import HuberWeight, StudentTWeight

identity = CovarianceModel(CovarianceKind.IDENTITY)


def gaussian_samples(N: int, n: int, seed: int = 0, kind: EntryKind = EntryKind.GAUSSIAN_COMPLEX) -> SampleSet:
    return generate_samples(identity, EntryDistribution(kind), N, None, n, seed)


def test_sample_covariance():
    X = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    np.testing.assert_allclose(sample_covariance(X), [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])


def test_sample_covariance_is_hermitian():
    S = gaussian_samples(5, 12)
    S_hat = sample_covariance(S)
    np.testing.assert_array_equal(S_hat, S_hat.conj().T)


@pytest.mark.slow
def test_sample_covariance_spectrum_edges():
    # c = 1/4 puts the limiting spectrum on [1/4, 9/4]
    inside = 0
    for trial in range(50):
        S = gaussian_samples(50, 200, seed=trial, kind=EntryKind.GAUSSIAN_REAL)
        eig = np.linalg.eigvalsh(sample_covariance(S))
        inside += bool(eig[0] >= 0.25 - 0.15 and eig[-1] <= 2.25 + 0.15)
    assert inside >= 48, f"Only {inside} of 50 spectra inside the support edges"


def test_sample_covariance_empty():
    with pytest.raises(DomainError):
        sample_covariance(np.zeros((3, 0)))


def test_quadratic_forms_identity():
    X = np.array([[3.0, 0.0], [4.0, 2.0]])
    np.testing.assert_allclose(quadratic_forms(X, np.eye(2)), [12.5, 2.0])


def test_quadratic_forms_errors():
    X = np.ones((2, 4))
    with pytest.raises(DimensionError):
        quadratic_forms(X, np.eye(3))
    with pytest.raises(SingularMatrixError):
        quadratic_forms(X, np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_closed_form_one_dimension():
    # C = u(4 / C) 4 with u(s) = 2 / (1 + s) has the single positive root C = 4
    X = np.array([[2.0, 2.0, 2.0]])
    estimate = robust_fixed_point(X, StudentTWeight(1.0), tol=1e-14)
    assert abs(estimate.matrix[0, 0] - 4.0) < 1e-12, f"C_hat = {estimate.matrix[0, 0]}"
    np.testing.assert_allclose(estimate.d, [1.0, 1.0, 1.0], rtol=1e-12)
    assert estimate.scale_reference == pytest.approx(1.0)
    assert abs(scaled_estimate(estimate, StudentTWeight(1.0))[0, 0] - sample_covariance(X)[0, 0]) < 1e-12


@pytest.mark.parametrize("w", [StudentTWeight(1.0), HuberWeight(2.0), StudentTWeight(3.0)], ids=repr)
def test_fixed_point_solves_equation(w):
    S = gaussian_samples(20, 80, seed=3)
    estimate = robust_fixed_point(S, w, tol=1e-12, max_iter=2000)

    norm = np.linalg.norm(estimate.matrix, 2)
    assert estimate.fixed_point_residual < 1e-8 * norm, f"residual {estimate.fixed_point_residual}"
    assert estimate.residual <= 1e-12
    assert estimate.iterations >= 1
    assert np.all(np.linalg.eigvalsh(estimate.matrix) > 0)
    np.testing.assert_allclose(estimate.d, quadratic_forms(S, estimate.matrix), rtol=1e-9)


def test_real_data_stays_real():
    S = gaussian_samples(6, 30, kind=EntryKind.GAUSSIAN_REAL)
    estimate = robust_fixed_point(S, HuberWeight(2.0))
    assert not np.iscomplexobj(estimate.matrix)


def test_constant_weights_reproduce_sample_covariance():
    # every d_i sits on the linear branch of a Huber weight with a large supremum
    S = gaussian_samples(10, 60, seed=1)
    w = HuberWeight(100.0)
    estimate = robust_fixed_point(S, w)
    np.testing.assert_allclose(scaled_estimate(estimate, w), sample_covariance(S), rtol=1e-8, atol=1e-12)


def test_affine_equivariance():
    S = gaussian_samples(8, 40, seed=7)
    B = np.triu(trial_rng(7, 1).standard_normal((8, 8))) + 3 * np.eye(8)
    w = StudentTWeight(1.0)

    C = robust_fixed_point(S, w, tol=1e-12, max_iter=2000).matrix
    C_B = robust_fixed_point(B @ S.X, w, tol=1e-12, max_iter=2000).matrix
    np.testing.assert_allclose(C_B, B @ C @ B.conj().T, rtol=1e-6, atol=1e-9)


def test_permutation_does_not_change_solution():
    S = gaussian_samples(10, 50, seed=5)
    order = trial_rng(5, 1).permutation(S.n)
    w = StudentTWeight(1.0)

    C = robust_fixed_point(S, w, tol=1e-12, max_iter=2000).matrix
    C_perm = robust_fixed_point(S.X[:, order], w, tol=1e-12, max_iter=2000).matrix
    np.testing.assert_allclose(C_perm, C, rtol=1e-10, atol=1e-12)


def test_initial_point_does_not_change_solution():
    S = gaussian_samples(10, 50, seed=4)
    w = StudentTWeight(1.0)
    base = robust_fixed_point(S, w, tol=1e-12, max_iter=2000)
    other = robust_fixed_point(S, w, tol=1e-12, max_iter=2000, initial=5 * np.eye(10))
    np.testing.assert_allclose(other.matrix, base.matrix, rtol=1e-7, atol=1e-10)


def test_too_few_samples():
    with pytest.raises(DomainError):
        robust_fixed_point(gaussian_samples(10, 10), HuberWeight(2.0))


def test_samples_not_spanning():
    X = gaussian_samples(4, 20).X
    X[3] = X[2]
    with pytest.raises(SpanError):
        robust_fixed_point(X, HuberWeight(2.0))


def test_iteration_limit():
    with pytest.raises(NonConvergenceError) as e:
        robust_fixed_point(gaussian_samples(10, 40), StudentTWeight(1.0), tol=1e-15, max_iter=1)
    assert e.value.iterations == 1
    assert e.value.residual > 1e-15


def test_feasible_start_value():
    S = gaussian_samples(20, 80)
    q0 = feasible_start(S, StudentTWeight(1.0))
    assert q0.shape == (80,)
    np.testing.assert_allclose(q0, 39.0)


def test_feasible_start_margin():
    S = gaussian_samples(4, 10)
    with pytest.raises(DomainError):
        feasible_start(S, StudentTWeight(1.0), margin=0.0)
    with pytest.raises(DomainError):
        feasible_start(S, StudentTWeight(1.0), margin=2.5)


@pytest.mark.parametrize("w", [StudentTWeight(1.0), HuberWeight(2.0)], ids=repr)
def test_interference_iteration_decreases(w):
    S = gaussian_samples(20, 80, seed=11)
    q0 = feasible_start(S, w)
    assert is_feasible(S, w, q0), "Constant start should be feasible for Gaussian samples"

    previous = [q0]

    def check(t, q):
        assert np.all(q <= previous[-1] * (1 + 1e-12)), f"q increased at step {t}"
        previous.append(q)

    q_star = interference_iterate(S, w, q0, tol=1e-12, max_iter=5000, on_step=check)
    assert len(previous) > 2

    d = robust_fixed_point(S, w, tol=1e-12, max_iter=5000).d
    np.testing.assert_allclose(q_star, d, rtol=1e-8)


def test_interference_one_dimension():
    X = np.array([[2.0, 2.0, 2.0]])
    q = interference_iterate(X, StudentTWeight(1.0), np.full(3, 10.0))
    np.testing.assert_allclose(q, [1.0, 1.0, 1.0], atol=1e-9)


def test_interference_start_must_be_positive():
    S = gaussian_samples(4, 10)
    with pytest.raises(DomainError):
        interference_iterate(S, StudentTWeight(1.0), np.zeros(10))


def test_interference_function_shape():
    S = gaussian_samples(4, 10)
    with pytest.raises(DimensionError):
        interference_function(S, StudentTWeight(1.0), np.ones(9))


@pytest.mark.parametrize("w", [StudentTWeight(1.0), HuberWeight(2.0), HuberWeight(1.1)], ids=repr)
def test_standard_interference_function(w):
    S = gaussian_samples(10, 40, seed=5)
    rng = trial_rng(5, 2)
    for _ in range(5):
        q = rng.uniform(0.1, 5.0, size=40)
        report = check_interference_properties(S, w, q, q_low=q * rng.uniform(0.2, 1.0, size=40), alpha=3.0)
        assert report.standard, f"{w!r}: {report}"


def test_interference_properties_arguments():
    S = gaussian_samples(4, 10)
    q = np.ones(10)
    with pytest.raises(DomainError):
        check_interference_properties(S, HuberWeight(2.0), q, alpha=1.0)
    with pytest.raises(DomainError):
        check_interference_properties(S, HuberWeight(2.0), q, q_low=2 * q)


@pytest.mark.slow
def test_phi_of_quadratic_forms_near_one():
    # (1/N) x_i* C_hat^-1 x_i concentrates where phi equals one
    w = StudentTWeight(1.0)
    passed = 0
    for trial in range(50):
        S = gaussian_samples(100, 400, seed=trial)
        d = robust_fixed_point(S, w).d
        phi = w.phi(d)
        passed += bool(np.all((phi > 0.8) & (phi < 1.2)))
    assert passed >= 48, f"Only {passed} of 50 trials had every phi(d_i) within (0.8, 1.2)"
