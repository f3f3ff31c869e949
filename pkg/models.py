from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from exceptions import HierarchyError, InvalidInputError, ShapeMismatchError


class PoolMode(str, Enum):
    MAX = "max"
    AVERAGE = "avg"


class PoolStructure(str, Enum):
    """Cluster-pooling structures: f-max is the plain full-stride max baseline."""

    F_MAX = "f-max"
    DS_AVG_F_MAX = "ds-avg-f-max"
    DS_MAX_F_AVG = "ds-max-f-avg"
    DS_ALT_F_MAX = "ds-alt-f-max"

    @property
    def final_mode(self) -> PoolMode:
        if self is PoolStructure.DS_MAX_F_AVG:
            return PoolMode.AVERAGE
        return PoolMode.MAX

    def recurrence_limit(self, max_depth: int) -> int:
        """Maximum number of clustering + pooling recurrences."""
        if self is PoolStructure.F_MAX:
            return 0
        if self is PoolStructure.DS_ALT_F_MAX:
            return max_depth
        return 1

    def level_mode(self, t: int) -> PoolMode:
        if self is PoolStructure.DS_AVG_F_MAX:
            return PoolMode.AVERAGE
        if self is PoolStructure.DS_MAX_F_AVG:
            return PoolMode.MAX
        # alternation starts with max
        return PoolMode.MAX if t % 2 == 0 else PoolMode.AVERAGE


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint clusters, listed in extraction order."""

    clusters: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_lists(cls, clusters: Iterable[Iterable[int]]) -> "Partition":
        return cls(tuple(tuple(int(i) for i in cluster) for cluster in clusters))

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def n_nodes(self) -> int:
        return sum(len(cluster) for cluster in self.clusters)

    @property
    def is_singletons(self) -> bool:
        return all(len(cluster) == 1 for cluster in self.clusters)

    def sizes(self) -> List[int]:
        return [len(cluster) for cluster in self.clusters]

    def as_sets(self) -> FrozenSet[FrozenSet[int]]:
        return frozenset(frozenset(cluster) for cluster in self.clusters)

    def to_lists(self) -> List[List[int]]:
        return [list(cluster) for cluster in self.clusters]

    def validate(self, n: Optional[int] = None) -> None:
        """Check the disjoint-cover invariants over {0..n-1}."""
        if n is None:
            n = self.n_nodes
        seen = set()
        for cluster in self.clusters:
            if not cluster:
                raise InvalidInputError("partition contains an empty cluster")
            for i in cluster:
                if i < 0 or i >= n:
                    raise InvalidInputError(f"partition index {i} outside 0..{n - 1}")
                if i in seen:
                    raise InvalidInputError(f"partition clusters overlap at node {i}")
                seen.add(i)
        if len(seen) != n:
            missing = sorted(set(range(n)) - seen)
            raise InvalidInputError(f"partition does not cover nodes {missing}")


@dataclass
class DominantSetResult:
    support: Tuple[int, ...]
    characteristic: np.ndarray
    cohesiveness: float
    iterations: int
    degenerate: bool = False


@dataclass
class RecurrenceLevel:
    """One clustering + pooling recurrence. argmax rows are local to their cluster."""

    n_nodes: int
    partition: Partition
    mode: PoolMode
    argmax: List[Optional[np.ndarray]]

    def global_argmax(self, k: int) -> np.ndarray:
        local = self.argmax[k]
        if local is None:
            raise InvalidInputError(f"cluster {k} was not max pooled")
        return np.asarray(self.partition.clusters[k], dtype=int)[local]


@dataclass
class RecurrenceTrace:
    n_input: int
    dim: int
    levels: List[RecurrenceLevel]
    final_mode: PoolMode
    final_n_nodes: int
    final_argmax: Optional[np.ndarray] = None

    def node_counts(self) -> List[int]:
        return [self.n_input] + [len(level.partition) for level in self.levels]

    def partitions(self) -> List[Partition]:
        return [level.partition for level in self.levels]


@dataclass
class HierarchyLevel:
    partition: Partition
    mode: PoolMode


@dataclass
class ClusteringHierarchy:
    """Universal clustering scheme shared by every object."""

    views_per_object: int
    structure: PoolStructure
    levels: List[HierarchyLevel]
    final_mode: PoolMode
    max_depth: int = 4

    def node_counts(self) -> List[int]:
        return [self.views_per_object] + [len(level.partition) for level in self.levels]

    def validate(self) -> None:
        if self.views_per_object < 1:
            raise HierarchyError("hierarchy needs at least one view per object")
        if self.max_depth < 1:
            raise HierarchyError("max_depth must be >= 1")
        limit = self.structure.recurrence_limit(self.max_depth)
        if len(self.levels) > limit:
            raise HierarchyError(
                f"{self.structure.value} allows {limit} recurrences, hierarchy has {len(self.levels)}"
            )

        n_t = self.views_per_object
        for t, level in enumerate(self.levels):
            if n_t == 1:
                raise HierarchyError(f"level {t} clusters a single remaining node")
            try:
                level.partition.validate(n_t)
            except InvalidInputError as exc:
                raise HierarchyError(f"level {t}: {exc.detail}") from exc
            is_last = t == len(self.levels) - 1
            if level.partition.is_singletons and not is_last:
                raise HierarchyError(f"level {t} is all singletons but is not the last level")
            n_t = len(level.partition)

        if not self.levels:
            if limit > 0 and self.views_per_object > 1:
                raise HierarchyError("clustering structure with no recorded levels")
            return
        last = self.levels[-1].partition
        if not (last.is_singletons or n_t == 1 or len(self.levels) == limit):
            raise HierarchyError("hierarchy ends before its clusters are stable")


@dataclass
class LabeledObject:
    id: str
    label: int
    features: np.ndarray


@dataclass
class Dataset:
    objects: List[LabeledObject]
    num_classes: int

    @property
    def n_views(self) -> int:
        return self.objects[0].features.shape[0]

    @property
    def dim(self) -> int:
        return self.objects[0].features.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.array([obj.label for obj in self.objects], dtype=int)

    def features(self) -> List[np.ndarray]:
        return [obj.features for obj in self.objects]

    def __len__(self) -> int:
        return len(self.objects)

    def validate(self) -> None:
        if not self.objects:
            raise InvalidInputError("dataset is empty")
        if self.num_classes < 1:
            raise InvalidInputError("dataset needs at least one class")
        shape = self.objects[0].features.shape
        for obj in self.objects:
            if obj.features.shape != shape:
                raise ShapeMismatchError(
                    f"object {obj.id} has shape {obj.features.shape}, expected {shape}"
                )
            if not 0 <= obj.label < self.num_classes:
                raise InvalidInputError(
                    f"object {obj.id} label {obj.label} outside 0..{self.num_classes - 1}"
                )


@dataclass
class LinearClassifier:
    """Linear classifier over standardised pooled vectors."""

    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    loss: str = "softmax"
    learning_rate: float = 0.5
    epochs: int = 200
    l2: float = 1e-4

    @classmethod
    def zeros(cls, num_classes: int, dim: int, **config) -> "LinearClassifier":
        return cls(
            weights=np.zeros((num_classes, dim)),
            bias=np.zeros(num_classes),
            feature_mean=np.zeros(dim),
            feature_scale=np.ones(dim),
            **config,
        )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def standardize(self, pooled: np.ndarray) -> np.ndarray:
        return (pooled - self.feature_mean) / self.feature_scale

    def scores(self, pooled: np.ndarray) -> np.ndarray:
        return self.standardize(pooled) @ self.weights.T + self.bias

    def predict(self, pooled: np.ndarray) -> np.ndarray:
        # np.argmax keeps the smallest class index on ties
        return np.argmax(self.scores(np.atleast_2d(pooled)), axis=1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))


@dataclass
class FrontEnd:
    """Per-view affine map followed by a relu clamp."""

    weights: np.ndarray
    bias: np.ndarray
    frozen: bool = False

    @classmethod
    def identity(cls, dim: int, frozen: bool = False) -> "FrontEnd":
        return cls(weights=np.eye(dim), bias=np.zeros(dim), frozen=frozen)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[1]

    def pre_activation(self, features: np.ndarray) -> np.ndarray:
        if features.shape[1] != self.input_dim:
            raise ShapeMismatchError(
                f"front end expects {self.input_dim} input channels, got {features.shape[1]}"
            )
        return features @ self.weights + self.bias

    def apply(self, features: np.ndarray) -> np.ndarray:
        return np.maximum(self.pre_activation(features), 0.0)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))
