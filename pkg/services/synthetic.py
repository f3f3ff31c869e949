"""Synthetic multi-view feature datasets.

Views are split into view groups (think side, front and oblique cameras).
Each (class, group) pair has a nonnegative prototype, and every view of an
object is its group's prototype plus gaussian noise, clamped at zero.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import ValidationError

from exceptions import InvalidInputError
from models import Dataset, LabeledObject
from schemas import SyntheticConfig

logger = logging.getLogger(__name__)


class SyntheticGenerator:
    def __init__(self, config: SyntheticConfig):
        self.config = config
        self.groups = config.view_groups()
        self._validate()

    def _validate(self) -> None:
        cfg = self.config
        members = sorted(i for group in self.groups for i in group)
        if members != list(range(cfg.n_views)) or any(not group for group in self.groups):
            raise InvalidInputError(f"view groups {self.groups} must partition views 0..{cfg.n_views - 1}")
        if cfg.orthogonal_groups and cfg.dim < len(self.groups):
            raise InvalidInputError(
                f"orthogonal groups need dim >= {len(self.groups)} channels, got {cfg.dim}"
            )
        if cfg.signal_groups is not None:
            bad = [g for g in cfg.signal_groups if not 0 <= g < len(self.groups)]
            if bad:
                raise InvalidInputError(f"signal groups {bad} do not exist")

    def prototypes(self, rng: np.random.Generator) -> np.ndarray:
        """Array of shape (classes, groups, dim)."""
        cfg = self.config
        n_groups = len(self.groups)
        if cfg.orthogonal_groups:
            blocks = np.array_split(np.arange(cfg.dim), n_groups)
        else:
            blocks = [np.arange(cfg.dim)] * n_groups
        signal = set(range(n_groups) if cfg.signal_groups is None else cfg.signal_groups)

        protos = np.zeros((cfg.num_classes, n_groups, cfg.dim))
        for g, block in enumerate(blocks):
            if g in signal:
                for c in range(cfg.num_classes):
                    protos[c, g, block] = rng.uniform(0.0, 1.0, size=block.size)
            else:
                # class-independent distractor view
                if cfg.distractor_level > 0:
                    pattern = np.full(block.size, cfg.distractor_level)
                else:
                    pattern = rng.uniform(0.0, 1.0, size=block.size)
                protos[:, g, block] = pattern
        return protos

    def generate(self) -> Dataset:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        protos = self.prototypes(rng)

        view_group = np.empty(cfg.n_views, dtype=int)
        for g, group in enumerate(self.groups):
            view_group[group] = g

        objects = []
        for c in range(cfg.num_classes):
            for k in range(cfg.objects_per_class):
                clean = protos[c, view_group]
                if cfg.noise_sigma > 0:
                    clean = clean + rng.normal(0.0, cfg.noise_sigma, size=clean.shape)
                objects.append(
                    LabeledObject(id=f"c{c:02d}_o{k:04d}", label=c, features=np.maximum(clean, 0.0))
                )
        logger.info(
            "Generated %d objects (%d classes, %d views, dim %d, sigma %.3g)",
            len(objects), cfg.num_classes, cfg.n_views, cfg.dim, cfg.noise_sigma,
        )
        return Dataset(objects=objects, num_classes=cfg.num_classes)


def generate_synthetic(
    num_classes: int,
    objects_per_class: int,
    n_views: int,
    dim: int,
    groups=None,
    noise_sigma: float = 0.05,
    seed: int = 0,
    **options,
) -> Dataset:
    try:
        config = SyntheticConfig(
            num_classes=num_classes,
            objects_per_class=objects_per_class,
            n_views=n_views,
            dim=dim,
            groups=groups,
            noise_sigma=noise_sigma,
            seed=seed,
            **options,
        )
    except ValidationError as exc:
        raise InvalidInputError(f"invalid synthetic dataset options: {exc}") from exc
    return SyntheticGenerator(config).generate()


def split_dataset(dataset: Dataset, test_per_class: int) -> Tuple[Dataset, Dataset]:
    """The last `test_per_class` objects of every class go to the test split."""
    if test_per_class < 0:
        raise InvalidInputError("test_per_class must be >= 0")
    by_class = {}
    for obj in dataset.objects:
        by_class.setdefault(obj.label, []).append(obj)

    train, test = [], []
    for label in sorted(by_class):
        members = by_class[label]
        if test_per_class >= len(members):
            raise InvalidInputError(
                f"class {label} has {len(members)} objects, cannot hold out {test_per_class}"
            )
        cut = len(members) - test_per_class
        train.extend(members[:cut])
        test.extend(members[cut:])
    return (
        Dataset(objects=train, num_classes=dataset.num_classes),
        Dataset(objects=test, num_classes=dataset.num_classes),
    )
