"""View similarity graphs built from relu feature matrices."""

from typing import Sequence

import numpy as np

from exceptions import InvalidInputError, ShapeMismatchError


def validate_features(features) -> np.ndarray:
    """Return the features as a float matrix, rejecting negative or non-finite entries."""
    matrix = np.asarray(features, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InvalidInputError(f"feature matrix must be n x d with n, d >= 1, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    if np.any(matrix < 0):
        # relu features are nonnegative; a negative entry means an upstream bug
        raise InvalidInputError("feature matrix contains negative entries")
    return matrix


def validate_affinity(affinity) -> np.ndarray:
    matrix = np.asarray(affinity, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise InvalidInputError(f"affinity matrix must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("affinity matrix contains non-finite entries")
    if np.any(matrix < 0):
        raise InvalidInputError("affinity matrix contains negative entries")
    if not np.array_equal(matrix, matrix.T):
        raise InvalidInputError("affinity matrix is not symmetric")
    if np.any(np.diag(matrix) != 0):
        raise InvalidInputError("affinity matrix has a nonzero diagonal")
    return matrix


def inner_product_affinity(features: np.ndarray) -> np.ndarray:
    """Strict upper triangle mirrored: exactly symmetric with a structural zero diagonal."""
    upper = np.triu(features @ features.T, k=1)
    return upper + upper.T


def build_affinity(features) -> np.ndarray:
    """a_ij = <r_i, r_j> for i != j, a_ii = 0. Raw inner products, no normalisation."""
    return inner_product_affinity(validate_features(features))


def average_affinities(affinities: Sequence[np.ndarray]) -> np.ndarray:
    if len(affinities) == 0:
        raise InvalidInputError("cannot average an empty list of affinity matrices")
    matrices = [validate_affinity(a) for a in affinities]
    shape = matrices[0].shape
    for k, matrix in enumerate(matrices):
        if matrix.shape != shape:
            raise ShapeMismatchError(f"affinity {k} has shape {matrix.shape}, expected {shape}")
    return np.mean(np.stack(matrices), axis=0)
