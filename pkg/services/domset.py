"""Dominant-set extraction by replicator dynamics, peel-off partitioning and a
brute-force oracle built directly on the recursive vertex weights."""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from config import settings
from exceptions import (
    DegenerateGraphError,
    InvalidInputError,
    NumericalError,
    OracleCapacityError,
)
from models import DominantSetResult, Partition
from schemas import DominantSetConfig
from services.affinity import validate_affinity

logger = logging.getLogger(__name__)

_CURVATURE_TOL = 1e-9
_STATIONARY_TOL = 1e-6


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

class WeightOracle:
    """Memoised w_S(i) on one affinity matrix."""

    def __init__(self, affinity, cap: Optional[int] = None):
        self.affinity = validate_affinity(affinity)
        self.n = self.affinity.shape[0]
        self.cap = settings.oracle_cap if cap is None else cap
        self._weights: Dict[Tuple[FrozenSet[int], int], float] = {}
        self._totals: Dict[FrozenSet[int], float] = {}

    def check_size(self, size: int) -> None:
        if size > self.cap:
            raise OracleCapacityError(
                f"set of size {size} exceeds the oracle cap of {self.cap} (exponential recursion)"
            )

    def check_indices(self, indices: Iterable[int]) -> None:
        for i in indices:
            if not 0 <= i < self.n:
                raise InvalidInputError(f"vertex {i} outside 0..{self.n - 1}")

    def phi(self, subset: FrozenSet[int], i: int, j: int) -> float:
        members = sorted(subset)
        return float(self.affinity[i, j] - self.affinity[i, members].sum() / len(members))

    def weight(self, subset: FrozenSet[int], i: int) -> float:
        key = (subset, i)
        cached = self._weights.get(key)
        if cached is not None:
            return cached
        if len(subset) == 1:
            value = 1.0
        else:
            rest = subset - {i}
            value = sum(self.phi(rest, j, i) * self.weight(rest, j) for j in sorted(rest))
        self._weights[key] = value
        return value

    def total(self, subset: FrozenSet[int]) -> float:
        cached = self._totals.get(subset)
        if cached is None:
            cached = sum(self.weight(subset, i) for i in sorted(subset))
            self._totals[subset] = cached
        return cached


def _as_set(subset: Iterable[int]) -> FrozenSet[int]:
    members = frozenset(int(i) for i in subset)
    if not members:
        raise InvalidInputError("vertex set must be nonempty")
    return members


def relative_similarity(subset: Iterable[int], i: int, j: int, affinity) -> float:
    """phi_S(i, j) = a_ij - mean_{k in S} a_ik."""
    members = _as_set(subset)
    affinity = validate_affinity(affinity)
    n = affinity.shape[0]
    for v in (*members, i, j):
        if not 0 <= v < n:
            raise InvalidInputError(f"vertex {v} outside 0..{n - 1}")
    if i not in members:
        raise InvalidInputError(f"vertex {i} is not in S")
    if j in members:
        raise InvalidInputError(f"vertex {j} must lie outside S")
    ordered = sorted(members)
    return float(affinity[i, j] - affinity[i, ordered].sum() / len(ordered))


def subset_weight(subset: Iterable[int], i: int, affinity, cap: Optional[int] = None) -> float:
    members = _as_set(subset)
    oracle = WeightOracle(affinity, cap)
    oracle.check_indices(members)
    if i not in members:
        raise InvalidInputError(f"vertex {i} is not in S")
    oracle.check_size(len(members))
    return oracle.weight(members, i)


def total_weight(subset: Iterable[int], affinity, cap: Optional[int] = None) -> float:
    members = _as_set(subset)
    oracle = WeightOracle(affinity, cap)
    oracle.check_indices(members)
    oracle.check_size(len(members))
    return oracle.total(members)


@dataclass
class DominantSetVerdict:
    is_dominant: bool
    violation: Optional[str] = None
    detail: str = ""


def check_dominant_set(
    subset: Iterable[int],
    affinity,
    tol: Optional[float] = None,
    oracle: Optional[WeightOracle] = None,
) -> DominantSetVerdict:
    """Evaluate the dominant-set conditions, naming the first one that fails.

    Internal weights must exceed +tol and external weights must stay below +tol,
    so an exact zero counts against membership and never for it.
    """
    tol = settings.verify_tol if tol is None else tol
    if tol < 0:
        raise InvalidInputError("tolerance must be >= 0")
    members = _as_set(subset)
    if oracle is None:
        oracle = WeightOracle(affinity)
    oracle.check_indices(members)
    outside = [i for i in range(oracle.n) if i not in members]
    oracle.check_size(len(members) + (1 if outside else 0))

    for i in sorted(members):
        w = oracle.weight(members, i)
        if not w > tol:
            return DominantSetVerdict(False, "internal-weight", f"w_S({i}) = {w:.3e}")

    for i in outside:
        w = oracle.weight(members | {i}, i)
        if not w < tol:
            return DominantSetVerdict(False, "external-weight", f"w_S+{i}({i}) = {w:.3e}")

    ordered = sorted(members)
    for size in range(2, len(ordered) + 1):
        for sub in combinations(ordered, size):
            total = oracle.total(frozenset(sub))
            if not total > tol:
                return DominantSetVerdict(False, "internal-subset", f"W({list(sub)}) = {total:.3e}")

    return DominantSetVerdict(True)


def verify_dominant_set(subset: Iterable[int], affinity, tol: Optional[float] = None) -> bool:
    verdict = check_dominant_set(subset, affinity, tol)
    if not verdict.is_dominant:
        logger.warning("%s is not a dominant set: %s violated (%s)", sorted(subset), verdict.violation, verdict.detail)
    return verdict.is_dominant


def brute_force_partition(affinity, tol: Optional[float] = None) -> List[Tuple[int, ...]]:
    """Every dominant set of the graph, by exhaustive subset enumeration."""
    affinity = validate_affinity(affinity)
    n = affinity.shape[0]
    if n > settings.brute_force_cap:
        raise OracleCapacityError(
            f"brute force enumeration is limited to n <= {settings.brute_force_cap}, got {n}"
        )
    oracle = WeightOracle(affinity, cap=max(settings.oracle_cap, n))
    found = []
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            if check_dominant_set(subset, affinity, tol, oracle=oracle).is_dominant:
                found.append(subset)
    return found


# ---------------------------------------------------------------------------
# Replicator dynamics
# ---------------------------------------------------------------------------

def replicator_step(x: np.ndarray, affinity: np.ndarray) -> np.ndarray:
    """x_i <- x_i (Ax)_i / (x'Ax)."""
    payoff = affinity @ x
    cohesion = float(x @ payoff)
    if np.isnan(cohesion):
        raise NumericalError("NaN encountered in replicator dynamics")
    if not cohesion > 0:
        raise DegenerateGraphError("x'Ax = 0: no similarity on the current support")
    updated = x * payoff / cohesion
    return updated / updated.sum()


def _singleton(n: int, vertex: int = 0) -> DominantSetResult:
    characteristic = np.zeros(n)
    characteristic[vertex] = 1.0
    return DominantSetResult(
        support=(vertex,), characteristic=characteristic, cohesiveness=0.0, iterations=0, degenerate=True
    )


def _ascent_direction(x: np.ndarray, affinity: np.ndarray, support: np.ndarray) -> Optional[np.ndarray]:
    """Direction of positive curvature of x'Ax along the support face, if any.

    Only asked at points where every support vertex earns the same payoff. None
    means x is a strict local maximiser on that face. A disconnected support
    or a saddle of the dynamics always has one.
    """
    k = support.size
    if k < 2:
        return None
    payoff = (affinity @ x)[support]
    if np.ptp(payoff) > _STATIONARY_TOL * float(np.abs(payoff).max()):
        return None
    block = affinity[np.ix_(support, support)]
    projector = np.eye(k) - 1.0 / k
    curvature, vectors = np.linalg.eigh(projector @ block @ projector)
    scale = float(np.abs(block).max())
    if not curvature[-1] > _CURVATURE_TOL * scale:
        return None
    direction = vectors[:, -1] - vectors[:, -1].mean()
    leading = np.flatnonzero(np.abs(direction) > _CURVATURE_TOL * np.abs(direction).max())[0]
    if direction[leading] < 0:
        direction = -direction
    full = np.zeros_like(x)
    full[support] = direction
    return full


def _escape(x: np.ndarray, direction: np.ndarray) -> np.ndarray:
    shrinking = direction < 0
    step = 0.5 * float(np.min(x[shrinking] / -direction[shrinking]))
    moved = np.clip(x + step * direction, 0.0, None)
    return moved / moved.sum()


def _extract(affinity: np.ndarray, cfg: DominantSetConfig) -> DominantSetResult:
    n = affinity.shape[0]
    if n == 1:
        return DominantSetResult(support=(0,), characteristic=np.ones(1), cohesiveness=0.0, iterations=0)

    x = np.full(n, 1.0 / n)
    iterations = 0
    escapes = 0
    while True:
        converged = False
        while iterations < cfg.max_iter:
            try:
                updated = replicator_step(x, affinity)
            except DegenerateGraphError:
                return _singleton(n)
            iterations += 1
            if not np.all(np.isfinite(updated)):
                raise NumericalError(f"non-finite iterate after {iterations} replicator steps")
            change = float(np.abs(updated - x).sum())
            x = updated
            if change < cfg.tol:
                converged = True
                break
        if not converged or escapes >= n:
            break
        # a stall at a saddle (e.g. the barycenter of equal-degree blocks) is not a dominant set
        direction = _ascent_direction(x, affinity, np.flatnonzero(x > cfg.support_threshold))
        if direction is None:
            break
        escapes += 1
        logger.debug("Leaving a saddle after %d iterations (escape %d)", iterations, escapes)
        x = _escape(x, direction)

    if not converged:
        logger.debug("Replicator dynamics hit max_iter=%d on %d vertices", cfg.max_iter, n)
    else:
        logger.debug("Replicator dynamics converged in %d iterations on %d vertices", iterations, n)

    support = tuple(int(i) for i in np.flatnonzero(x > cfg.support_threshold))
    if not support:
        support = (int(np.argmax(x)),)
    return DominantSetResult(
        support=support,
        characteristic=x,
        cohesiveness=float(x @ affinity @ x),
        iterations=iterations,
    )


def extract_dominant_set(affinity, cfg: Optional[DominantSetConfig] = None) -> DominantSetResult:
    """Run the dynamics from the barycenter and read the support off the limit."""
    return _extract(validate_affinity(affinity), cfg or DominantSetConfig.from_settings())


def peel_partition(affinity, cfg: Optional[DominantSetConfig] = None) -> Partition:
    """Extract a dominant set, remove it, repeat on the induced subgraph."""
    affinity = validate_affinity(affinity)
    cfg = cfg or DominantSetConfig.from_settings()

    remaining = list(range(affinity.shape[0]))
    clusters = []
    while remaining:
        sub = affinity[np.ix_(remaining, remaining)]
        if not np.any(sub):
            # no grouping evidence left
            clusters.extend((v,) for v in remaining)
            break
        result = _extract(sub, cfg)
        chosen = set(result.support)
        clusters.append(tuple(remaining[k] for k in result.support))
        remaining = [v for k, v in enumerate(remaining) if k not in chosen]

    partition = Partition(tuple(clusters))
    logger.debug("Peeled %d nodes into clusters of sizes %s", affinity.shape[0], partition.sizes())
    return partition
