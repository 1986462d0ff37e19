import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasitrust.errors import InvalidGridError, WeightMismatchError
from quasitrust.linalg import (
    SymOperator, WeightedVector, euclidean_to_weighted, normalize_sign, smallest_eigenpair,
    trapezoid_weights, weighted_to_euclidean,
)


@pytest.mark.parametrize("n, length, expected", [
    (2, 1.0, [0.5, 0.5]),
    (5, 2.0, [0.25, 0.5, 0.5, 0.5, 0.25]),
])
def test_trapezoid_weights_small(n, length, expected):
    np.testing.assert_allclose(trapezoid_weights(n, length), expected, rtol=0, atol=1e-15)


def test_trapezoid_weights_hundred():
    w = trapezoid_weights(100, 1.0)
    assert w[1] == pytest.approx(1 / 99)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n, length", [(1, 1.0), (0, 1.0), (5, 0.0), (5, -1.0)])
def test_trapezoid_weights_rejects(n, length):
    with pytest.raises(InvalidGridError):
        trapezoid_weights(n, length)


@given(st.integers(2, 400), st.floats(0.01, 100.0))
def test_trapezoid_weights_sum_to_length(n, length):
    assert trapezoid_weights(n, length).sum() == pytest.approx(length, rel=1e-12)


def test_weighted_vector_algebra():
    w = np.array([0.25, 0.5, 0.25])
    x = WeightedVector(np.array([1.0, 2.0, 3.0]), w)
    y = WeightedVector(np.array([0.0, 1.0, -1.0]), w)
    assert x.inner(y) == pytest.approx(0.5 * 2 - 0.25 * 3)
    assert x.norm_sq() == pytest.approx(0.25 + 2.0 + 2.25)
    np.testing.assert_allclose((x - y).coeffs, [1.0, 1.0, 4.0])
    np.testing.assert_allclose((x * 2.0 + y).coeffs, [2.0, 5.0, 5.0])


def test_weighted_vector_mismatch():
    with pytest.raises(WeightMismatchError):
        WeightedVector(np.ones(3), np.ones(2))
    with pytest.raises(WeightMismatchError):
        WeightedVector(np.ones(2), np.array([1.0, 0.0]))
    a = WeightedVector(np.ones(2), np.ones(2))
    b = WeightedVector(np.ones(2), np.array([1.0, 2.0]))
    with pytest.raises(WeightMismatchError):
        a.inner(b)


def test_euclidean_transform_examples():
    x = WeightedVector(np.array([3.0, 4.0]), np.ones(2))
    np.testing.assert_allclose(weighted_to_euclidean(x), [3.0, 4.0])
    x = WeightedVector(np.array([2.0, 2.0]), np.array([0.25, 0.25]))
    v = weighted_to_euclidean(x)
    np.testing.assert_allclose(v, [1.0, 1.0])
    assert x.norm_sq() == pytest.approx(2.0) and v @ v == pytest.approx(2.0)


@settings(max_examples=50)
@given(st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_euclidean_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.01, 3.0, n)
    x = WeightedVector(rng.standard_normal(n), w)
    back = euclidean_to_weighted(weighted_to_euclidean(x), w)
    assert np.max(np.abs(back.coeffs - x.coeffs)) < 1e-14
    assert np.linalg.norm(weighted_to_euclidean(x)) ** 2 == pytest.approx(x.norm_sq(), rel=1e-13)


def test_sym_operator_materialize_and_symmetry(rng):
    M = rng.standard_normal((6, 6))
    M = M + M.T
    op = SymOperator(6, lambda u: M @ u)
    np.testing.assert_allclose(op.materialize(), M, atol=1e-14)
    assert op.is_symmetric(1e-8)
    skew = SymOperator(6, lambda u: (M + np.triu(np.ones((6, 6)))) @ u)
    assert not skew.is_symmetric(1e-8)


def test_smallest_eigenpair_identity():
    pair = smallest_eigenpair(SymOperator.from_matrix(np.eye(3)))
    assert pair.value == pytest.approx(1.0)
    assert np.linalg.norm(pair.vector) == pytest.approx(1.0)


def test_smallest_eigenpair_diagonal():
    pair = smallest_eigenpair(SymOperator.from_matrix(np.diag([-1.0, 2.0])))
    assert pair.value == pytest.approx(-1.0)
    np.testing.assert_allclose(np.abs(pair.vector), [1.0, 0.0], atol=1e-14)


def test_smallest_eigenpair_dense_random(rng):
    M = rng.standard_normal((50, 50))
    M = M + M.T
    pair = smallest_eigenpair(SymOperator.from_matrix(M))
    assert abs(pair.value - np.linalg.eigvalsh(M)[0]) < 1e-10


@pytest.mark.parametrize("dim", [250, 400])
def test_smallest_eigenpair_lanczos_matches_dense(dim, rng):
    M = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    M = M + M.T
    op = SymOperator(dim, lambda u: M @ u)  # matrix-free, so Lanczos is used
    pair = smallest_eigenpair(op, tol_eig=1e-12, seed=3)
    assert abs(pair.value - np.linalg.eigvalsh(M)[0]) < 1e-10
    assert np.linalg.norm(M @ pair.vector - pair.value * pair.vector) < 1e-8
    assert pair.matvecs > 0


def test_normalize_sign():
    np.testing.assert_array_equal(normalize_sign(np.array([0.0, -1.0, 2.0])), [0.0, 1.0, -2.0])
    np.testing.assert_array_equal(normalize_sign(np.array([1e-20, -1.0])), [-1e-20, 1.0])
