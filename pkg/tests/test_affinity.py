import numpy as np
import pytest

from conftest import random_affinity
from exceptions import InvalidInputError, ShapeMismatchError
from services.affinity import average_affinities, build_affinity, validate_affinity, validate_features


def test_build_affinity_inner_products():
    features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    expected = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    np.testing.assert_array_equal(build_affinity(features), expected)


def test_orthogonal_rows_give_zero_graph():
    np.testing.assert_array_equal(build_affinity(np.eye(2)), np.zeros((2, 2)))


def test_build_affinity_matches_double_loop(rng):
    features = rng.uniform(0.0, 2.0, size=(5, 7))
    affinity = build_affinity(features)
    for i in range(5):
        for j in range(5):
            expected = 0.0 if i == j else sum(features[i, c] * features[j, c] for c in range(7))
            assert affinity[i, j] == pytest.approx(expected, rel=1e-12)


def test_affinity_is_exactly_symmetric_with_zero_diagonal(rng):
    affinity = build_affinity(rng.uniform(size=(9, 13)))
    assert np.array_equal(affinity, affinity.T)
    assert np.all(np.diag(affinity) == 0.0)
    validate_affinity(affinity)


def test_zero_columns_do_not_change_affinity(rng):
    features = rng.uniform(size=(6, 4))
    padded = np.hstack([features, np.zeros((6, 3))])
    np.testing.assert_allclose(build_affinity(padded), build_affinity(features), rtol=1e-14)


def test_row_permutation_is_equivariant(rng):
    features = rng.uniform(size=(6, 5))
    perm = rng.permutation(6)
    np.testing.assert_allclose(
        build_affinity(features[perm]), build_affinity(features)[np.ix_(perm, perm)], rtol=1e-14
    )


@pytest.mark.parametrize(
    "features",
    [
        [[1.0, -0.5], [0.0, 1.0]],
        [[1.0, np.nan], [0.0, 1.0]],
        [[1.0, np.inf], [0.0, 1.0]],
        [1.0, 2.0],
        np.zeros((0, 3)),
    ],
)
def test_invalid_features_rejected(features):
    with pytest.raises(InvalidInputError):
        build_affinity(features)


def test_validate_features_returns_float_matrix():
    matrix = validate_features([[1, 2], [3, 4]])
    assert matrix.dtype == float


def test_average_of_identical_is_identity(rng):
    affinity = random_affinity(rng, 5)
    np.testing.assert_allclose(average_affinities([affinity, affinity]), affinity, rtol=1e-15)


def test_average_is_linear(rng):
    affinity = random_affinity(rng, 4)
    np.testing.assert_allclose(average_affinities([np.zeros((4, 4)), 2 * affinity]), affinity, rtol=1e-15)


def test_average_matches_summation(rng):
    affinities = [random_affinity(rng, 6) for _ in range(10)]
    expected = np.zeros((6, 6))
    for affinity in affinities:
        expected += affinity
    expected /= 10
    averaged = average_affinities(affinities)
    np.testing.assert_allclose(averaged, expected, rtol=1e-12)
    validate_affinity(averaged)


def test_average_commutes_with_permutation(rng):
    affinities = [random_affinity(rng, 5) for _ in range(4)]
    perm = rng.permutation(5)
    permuted = [a[np.ix_(perm, perm)] for a in affinities]
    np.testing.assert_allclose(
        average_affinities(permuted), average_affinities(affinities)[np.ix_(perm, perm)], rtol=1e-14
    )


def test_average_rejects_empty_and_mismatched(rng):
    with pytest.raises(InvalidInputError):
        average_affinities([])
    with pytest.raises(ShapeMismatchError):
        average_affinities([random_affinity(rng, 3), random_affinity(rng, 4)])


@pytest.mark.parametrize(
    "affinity",
    [
        [[0.0, 1.0], [2.0, 0.0]],
        [[1.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0], [-1.0, 0.0]],
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
    ],
)
def test_invalid_affinities_rejected(affinity):
    with pytest.raises(InvalidInputError):
        validate_affinity(affinity)
