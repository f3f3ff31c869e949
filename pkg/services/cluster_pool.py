"""Recurrent clustering and pooling layer.

Forward: cluster the current nodes into dominant sets, pool within every
cluster, feed the pooled vectors back in, and finish with a full-stride pool
once the clusters are stable. Backward reverses pooling and then selection
for every cluster of every recurrence, treating the recorded assignments as
constants.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from exceptions import HierarchyError, InvalidInputError, ShapeMismatchError
from models import (
    ClusteringHierarchy,
    HierarchyLevel,
    Partition,
    PoolMode,
    PoolStructure,
    RecurrenceLevel,
    RecurrenceTrace,
)
from schemas import DominantSetConfig
from services.affinity import inner_product_affinity, validate_features
from services.domset import peel_partition

logger = logging.getLogger(__name__)


def assignment_matrix(cluster: Sequence[int], n: int) -> np.ndarray:
    """One-hot c_k x n matrix; row i selects the i-th member of the cluster."""
    members = np.asarray(cluster, dtype=int)
    if members.size == 0:
        raise InvalidInputError("empty cluster")
    if np.any(members < 0) or np.any(members >= n):
        raise ShapeMismatchError(f"cluster {list(cluster)} indexes outside 0..{n - 1}")
    if np.unique(members).size != members.size:
        raise InvalidInputError(f"cluster {list(cluster)} selects a node twice")
    onehot = np.zeros((members.size, n))
    onehot[np.arange(members.size), members] = 1.0
    return onehot


def gather_cluster(assignment: np.ndarray, features: np.ndarray) -> np.ndarray:
    """m_k = C X."""
    if assignment.ndim != 2 or assignment.shape[1] != features.shape[0]:
        raise ShapeMismatchError(
            f"assignment of shape {assignment.shape} cannot select rows of a {features.shape} matrix"
        )
    return assignment @ features


def within_cluster_pool(members: np.ndarray, mode: PoolMode) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Channel-wise pool. MAX also returns, per channel, the smallest row achieving the max."""
    members = np.atleast_2d(members)
    if members.shape[0] < 1:
        raise InvalidInputError("cannot pool an empty cluster")
    if PoolMode(mode) is PoolMode.MAX:
        rows = np.argmax(members, axis=0)
        return members[rows, np.arange(members.shape[1])], rows
    return members.mean(axis=0), None


def pool_partition(
    features: np.ndarray, partition: Partition, mode: PoolMode
) -> Tuple[np.ndarray, RecurrenceLevel]:
    """Pool every cluster of the partition; one output row per cluster."""
    n = features.shape[0]
    pooled = np.empty((len(partition), features.shape[1]))
    argmax: List[Optional[np.ndarray]] = []
    for k, cluster in enumerate(partition.clusters):
        members = gather_cluster(assignment_matrix(cluster, n), features)
        pooled[k], rows = within_cluster_pool(members, mode)
        argmax.append(rows)
    return pooled, RecurrenceLevel(n_nodes=n, partition=partition, mode=PoolMode(mode), argmax=argmax)


def _check_plan(hierarchy: ClusteringHierarchy, structure: PoolStructure, n: int) -> None:
    if hierarchy.structure is not structure:
        raise HierarchyError(
            f"hierarchy was built for {hierarchy.structure.value}, not {structure.value}"
        )
    if hierarchy.views_per_object != n:
        raise HierarchyError(
            f"hierarchy expects {hierarchy.views_per_object} views, object has {n}"
        )


def _run_levels(features: np.ndarray, hierarchy: ClusteringHierarchy) -> Tuple[np.ndarray, List[RecurrenceLevel]]:
    levels = []
    for t, step in enumerate(hierarchy.levels):
        n_t = features.shape[0]
        try:
            step.partition.validate(n_t)
        except InvalidInputError as exc:
            raise HierarchyError(f"level {t} does not fit {n_t} nodes: {exc.detail}") from exc
        features, level = pool_partition(features, step.partition, step.mode)
        levels.append(level)
    return features, levels


def forward(
    features,
    structure,
    fixed_hierarchy: Optional[ClusteringHierarchy] = None,
    max_depth: Optional[int] = None,
    cfg: Optional[DominantSetConfig] = None,
) -> Tuple[np.ndarray, RecurrenceTrace]:
    """Pool n views into one vector; the trace records what backward needs."""
    current = validate_features(features)
    structure = PoolStructure(structure)
    n_input, dim = current.shape

    if fixed_hierarchy is not None:
        _check_plan(fixed_hierarchy, structure, n_input)
        current, levels = _run_levels(current, fixed_hierarchy)
        final_mode = fixed_hierarchy.final_mode
    else:
        max_depth = settings.max_depth if max_depth is None else max_depth
        if max_depth < 1:
            raise InvalidInputError("max_depth must be >= 1")
        cfg = cfg or DominantSetConfig.from_settings()
        levels = []
        for t in range(structure.recurrence_limit(max_depth)):
            if current.shape[0] == 1:
                break
            # pooled vectors stay nonnegative, so no re-validation is needed
            partition = peel_partition(inner_product_affinity(current), cfg)
            current, level = pool_partition(current, partition, structure.level_mode(t))
            levels.append(level)
            if partition.is_singletons:
                break
        final_mode = structure.final_mode

    pooled, final_argmax = within_cluster_pool(current, final_mode)
    trace = RecurrenceTrace(
        n_input=n_input,
        dim=dim,
        levels=levels,
        final_mode=final_mode,
        final_n_nodes=current.shape[0],
        final_argmax=final_argmax,
    )
    logger.debug("Forward %s: node counts %s", structure.value, trace.node_counts())
    return pooled, trace


def _unpool(grad: np.ndarray, mode: PoolMode, rows: Optional[np.ndarray], size: int) -> np.ndarray:
    """f_p^-1: route a pooled gradient back onto the cluster's member rows."""
    if mode is PoolMode.MAX:
        upstream = np.zeros((size, grad.shape[0]))
        upstream[rows, np.arange(grad.shape[0])] = grad
        return upstream
    return np.tile(grad / size, (size, 1))


def backward(grad_output, trace: RecurrenceTrace) -> np.ndarray:
    """dL/dX0 from dL/dY, walking the recurrences in reverse."""
    grad = np.asarray(grad_output, dtype=float).reshape(-1)
    if grad.shape[0] != trace.dim:
        raise ShapeMismatchError(f"gradient has {grad.shape[0]} channels, trace has {trace.dim}")

    grad = _unpool(grad, trace.final_mode, trace.final_argmax, trace.final_n_nodes)
    for level in reversed(trace.levels):
        if grad.shape[0] != len(level.partition):
            raise ShapeMismatchError(
                f"gradient has {grad.shape[0]} rows, recurrence produced {len(level.partition)}"
            )
        upstream = np.zeros((level.n_nodes, trace.dim))
        for k, cluster in enumerate(level.partition.clusters):
            members_grad = _unpool(grad[k], level.mode, level.argmax[k], len(cluster))
            upstream += assignment_matrix(cluster, level.n_nodes).T @ members_grad
        grad = upstream
    return grad


def hierarchy_from_trace(trace: RecurrenceTrace, structure, max_depth: Optional[int] = None) -> ClusteringHierarchy:
    """Freeze a per-object trace into a replayable hierarchy."""
    hierarchy = ClusteringHierarchy(
        views_per_object=trace.n_input,
        structure=PoolStructure(structure),
        levels=[HierarchyLevel(partition=level.partition, mode=level.mode) for level in trace.levels],
        final_mode=trace.final_mode,
        max_depth=settings.max_depth if max_depth is None else max_depth,
    )
    hierarchy.validate()
    return hierarchy


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    max_relative_error: float
    tie_channels: List[int] = field(default_factory=list)
    checked_entries: int = 0
    analytic: Optional[np.ndarray] = None
    numeric: Optional[np.ndarray] = None


def _replay(features: np.ndarray, hierarchy: ClusteringHierarchy) -> np.ndarray:
    # unvalidated: finite-difference probes may step below zero
    current, _ = _run_levels(features, hierarchy)
    pooled, _ = within_cluster_pool(current, hierarchy.final_mode)
    return pooled


def channel_margins(features: np.ndarray, hierarchy: ClusteringHierarchy) -> np.ndarray:
    """Smallest gap between the top two candidates of any max pool, per channel."""
    margins = np.full(features.shape[1], np.inf)

    def record(block: np.ndarray) -> None:
        if block.shape[0] < 2:
            return
        top_two = np.sort(block, axis=0)[-2:]
        np.minimum(margins, top_two[1] - top_two[0], out=margins)

    current = features
    for step in hierarchy.levels:
        if step.mode is PoolMode.MAX:
            for cluster in step.partition.clusters:
                record(current[list(cluster)])
        current, _ = pool_partition(current, step.partition, step.mode)
    if hierarchy.final_mode is PoolMode.MAX:
        record(current)
    return margins


def gradient_check(
    features,
    structure,
    hierarchy: Optional[ClusteringHierarchy] = None,
    eps: Optional[float] = None,
    seed: int = 0,
) -> GradientCheckReport:
    """Compare backward with central differences of L(Y) = 0.5|Y|^2 + w.Y.

    Clustering is frozen to the hierarchy, which makes the layer piecewise
    linear; channels whose max pools are within 10*eps of a tie are excluded.
    """
    eps = settings.gradcheck_eps if eps is None else eps
    if eps <= 0:
        raise InvalidInputError("eps must be > 0")
    x0 = validate_features(features)
    structure = PoolStructure(structure)
    if hierarchy is None:
        _, trace = forward(x0, structure)
        hierarchy = hierarchy_from_trace(trace, structure)

    weights = np.random.default_rng(seed).uniform(0.5, 1.5, size=x0.shape[1])

    def loss(pooled: np.ndarray) -> float:
        return float(0.5 * pooled @ pooled + weights @ pooled)

    pooled, trace = forward(x0, structure, hierarchy)
    analytic = backward(pooled + weights, trace)

    ties = np.flatnonzero(channel_margins(x0, hierarchy) <= 10 * eps)
    if ties.size:
        logger.warning("Excluding tie-ambiguous channels %s from the gradient check", ties.tolist())
    tie_set = set(ties.tolist())

    numeric = np.zeros_like(x0)
    worst = 0.0
    checked = 0
    for row, col in np.ndindex(*x0.shape):
        if col in tie_set:
            continue
        probe = x0.copy()
        probe[row, col] += eps
        plus = loss(_replay(probe, hierarchy))
        probe[row, col] -= 2 * eps
        minus = loss(_replay(probe, hierarchy))
        numeric[row, col] = (plus - minus) / (2 * eps)

        a, b = analytic[row, col], numeric[row, col]
        scale = max(abs(a), abs(b))
        if scale > 0:
            worst = max(worst, abs(a - b) / scale)
        checked += 1

    return GradientCheckReport(
        max_relative_error=worst,
        tie_channels=ties.tolist(),
        checked_entries=checked,
        analytic=analytic,
        numeric=numeric,
    )
