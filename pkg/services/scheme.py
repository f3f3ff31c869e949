"""Universal clustering hierarchy shared by all objects.

At every recurrence the affinity matrices of all objects (at their current,
already pooled level) are averaged, the average is peeled into dominant sets,
and every object is pooled with that one shared partition.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from exceptions import HierarchyError, InvalidInputError, ShapeMismatchError
from models import ClusteringHierarchy, HierarchyLevel, Partition, PoolStructure, RecurrenceTrace
from schemas import DominantSetConfig, HierarchyLevelSchema, HierarchySchema
from services.affinity import average_affinities, inner_product_affinity, validate_features
from services.cluster_pool import forward, pool_partition
from services.domset import peel_partition
from storage import read_json, write_json

logger = logging.getLogger(__name__)


class HierarchyBuilder:
    """Builds a universal hierarchy over a set of training objects."""

    def __init__(self, max_depth: Optional[int] = None, cfg: Optional[DominantSetConfig] = None):
        self.max_depth = settings.max_depth if max_depth is None else max_depth
        self.cfg = cfg or DominantSetConfig.from_settings()
        if self.max_depth < 1:
            raise InvalidInputError("max_depth must be >= 1")

    def build(self, dataset: Sequence[np.ndarray], structure) -> ClusteringHierarchy:
        if len(dataset) == 0:
            raise InvalidInputError("cannot build a hierarchy from an empty dataset")
        structure = PoolStructure(structure)
        current = [validate_features(features) for features in dataset]
        n = current[0].shape[0]
        for k, features in enumerate(current):
            if features.shape[0] != n:
                raise ShapeMismatchError(
                    f"object {k} has {features.shape[0]} views, expected {n} (camera order must match)"
                )

        levels = []
        for t in range(structure.recurrence_limit(self.max_depth)):
            if current[0].shape[0] == 1:
                break
            averaged = average_affinities([inner_product_affinity(features) for features in current])
            partition = peel_partition(averaged, self.cfg)
            mode = structure.level_mode(t)
            levels.append(HierarchyLevel(partition=partition, mode=mode))
            current = [pool_partition(features, partition, mode)[0] for features in current]
            logger.info(
                "Recurrence %d: %d -> %d nodes (%s pooling)",
                t, partition.n_nodes, len(partition), mode.value,
            )
            if partition.is_singletons:
                break

        hierarchy = ClusteringHierarchy(
            views_per_object=n,
            structure=structure,
            levels=levels,
            final_mode=structure.final_mode,
            max_depth=self.max_depth,
        )
        hierarchy.validate()
        return hierarchy


def build_universal_hierarchy(
    dataset: Sequence[np.ndarray],
    structure,
    max_depth: Optional[int] = None,
    cfg: Optional[DominantSetConfig] = None,
) -> ClusteringHierarchy:
    return HierarchyBuilder(max_depth, cfg).build(dataset, structure)


def apply_hierarchy(features, hierarchy: ClusteringHierarchy) -> Tuple[np.ndarray, RecurrenceTrace]:
    features = validate_features(features)
    if features.shape[0] != hierarchy.views_per_object:
        raise ShapeMismatchError(
            f"object has {features.shape[0]} views, hierarchy expects {hierarchy.views_per_object}"
        )
    return forward(features, hierarchy.structure, fixed_hierarchy=hierarchy)


def hierarchy_to_schema(hierarchy: ClusteringHierarchy) -> HierarchySchema:
    return HierarchySchema(
        n=hierarchy.views_per_object,
        structure=hierarchy.structure,
        levels=[
            HierarchyLevelSchema(partition=level.partition.to_lists(), mode=level.mode)
            for level in hierarchy.levels
        ],
        final_mode=hierarchy.final_mode,
        max_depth=hierarchy.max_depth,
    )


def hierarchy_from_schema(document: HierarchySchema) -> ClusteringHierarchy:
    hierarchy = ClusteringHierarchy(
        views_per_object=document.n,
        structure=document.structure,
        levels=[
            HierarchyLevel(partition=Partition.from_lists(level.partition), mode=level.mode)
            for level in document.levels
        ],
        final_mode=document.final_mode,
        max_depth=document.max_depth,
    )
    hierarchy.validate()
    return hierarchy


def save_hierarchy(hierarchy: ClusteringHierarchy, path: Union[str, Path]) -> None:
    write_json(path, hierarchy_to_schema(hierarchy))


def load_hierarchy(path: Union[str, Path]) -> ClusteringHierarchy:
    try:
        document = read_json(path, HierarchySchema)
    except InvalidInputError as exc:
        raise HierarchyError(f"malformed hierarchy: {exc.detail}") from exc
    return hierarchy_from_schema(document)
