import itertools

import numpy as np
import pytest

from schemas import DominantSetConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def domset_cfg():
    return DominantSetConfig(tol=1e-8, max_iter=10000, support_threshold=1e-5)


@pytest.fixture
def block_affinity():
    """Two uniform blocks {0,1,2} and {3,4} with no cross-block similarity."""
    affinity = np.zeros((5, 5))
    affinity[:3, :3] = 1.0
    affinity[3:, 3:] = 2.0
    np.fill_diagonal(affinity, 0.0)
    return affinity


@pytest.fixture
def block_features():
    """Rows whose inner products reproduce the two-block structure."""
    return np.array(
        [
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 2.0, 1.0],
            [0.0, 0.0, 2.0, 1.0],
        ]
    )


def random_affinity(rng, n, low=0.0, high=1.0):
    upper = np.triu(rng.uniform(low, high, size=(n, n)), k=1)
    return upper + upper.T


def maximal_cliques(adjacency):
    """Naive enumeration of maximal cliques of a 0/1 graph."""
    n = adjacency.shape[0]
    cliques = []
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            if all(adjacency[i, j] for i, j in itertools.combinations(subset, 2)):
                cliques.append(frozenset(subset))
    return {c for c in cliques if not any(c < other for other in cliques)}


def planted_clique(rng, n=8, clique=(0, 1, 2, 3)):
    """0/1 graph whose only 4-clique is `clique`; outsiders touch at most one clique vertex."""
    while True:
        adjacency = np.zeros((n, n))
        for i, j in itertools.combinations(clique, 2):
            adjacency[i, j] = adjacency[j, i] = 1.0
        outside = [v for v in range(n) if v not in clique]
        for v in outside:
            if rng.uniform() < 0.25:
                u = clique[rng.integers(len(clique))]
                adjacency[u, v] = adjacency[v, u] = 1.0
        for u, v in itertools.combinations(outside, 2):
            if rng.uniform() < 0.25:
                adjacency[u, v] = adjacency[v, u] = 1.0
        cliques = maximal_cliques(adjacency)
        if [c for c in cliques if len(c) >= 4] == [frozenset(clique)]:
            return adjacency


def orthogonal_views(rng, n, d):
    """n views with disjoint channel supports, so every pairwise inner product is zero."""
    features = np.zeros((n, d))
    for c in range(d):
        features[c % n, c] = rng.uniform(0.1, 1.0)
    return features


def block_views(rng, n, d, groups=3, noise=0.05):
    """Views drawn around one random prototype per view group, plus a small positive floor."""
    labels = np.arange(n) % groups
    protos = rng.uniform(0.0, 1.0, size=(groups, d))
    return protos[labels] + rng.uniform(0.0, noise, size=(n, d))
