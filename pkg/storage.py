"""Plain-text matrix files, JSON documents and dataset manifests."""

import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from exceptions import InvalidInputError
from models import Dataset, LabeledObject
from schemas import DatasetManifest, ManifestObject
from services.affinity import validate_features

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SchemaT = TypeVar("SchemaT", bound=BaseModel)


def parse_matrix(text: str, source: str = "<text>") -> np.ndarray:
    """Parse the `n d` header format followed by n rows of d floats."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise InvalidInputError(f"{source}: empty matrix file")
    header = lines[0].split()
    if len(header) != 2:
        raise InvalidInputError(f"{source}: header must be 'rows cols'")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError as exc:
        raise InvalidInputError(f"{source}: non-integer header {lines[0]!r}") from exc
    if rows < 1 or cols < 1:
        raise InvalidInputError(f"{source}: matrix dimensions must be positive")
    if len(lines) - 1 != rows:
        raise InvalidInputError(f"{source}: header declares {rows} rows, found {len(lines) - 1}")

    parsed = []
    for r, line in enumerate(lines[1:]):
        values = line.split()
        if len(values) != cols:
            raise InvalidInputError(f"{source}: row {r} has {len(values)} values, expected {cols}")
        try:
            parsed.append([float(v) for v in values])
        except ValueError as exc:
            raise InvalidInputError(f"{source}: row {r} is not numeric") from exc
    return np.array(parsed, dtype=float)


def format_matrix(matrix: np.ndarray) -> str:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [f"{matrix.shape[0]} {matrix.shape[1]}"]
    # repr gives the shortest round-tripping decimal, so output is lossless and stable
    lines.extend(" ".join(repr(float(v)) for v in row) for row in matrix)
    return "\n".join(lines) + "\n"


def read_matrix(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path}: not a UTF-8 text file ({exc.reason} at byte {exc.start})") from exc
    return parse_matrix(text, source=str(path))


def write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc.strerror}") from exc


def write_matrix(path: PathLike, matrix: np.ndarray) -> None:
    write_text(path, format_matrix(matrix))


def emit(text: str, path: Optional[PathLike] = None) -> None:
    """Write to the given output path, or to stdout when none was given."""
    if path is None:
        sys.stdout.write(text)
    else:
        write_text(path, text)


def read_json(path: PathLike, schema: Type[SchemaT]) -> SchemaT:
    path = Path(path)
    try:
        return schema.model_validate_json(path.read_bytes())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except ValidationError as exc:
        raise InvalidInputError(f"{path}: {exc.error_count()} validation error(s): {exc}") from exc


def dump_json(document: BaseModel) -> str:
    return document.model_dump_json(indent=2) + "\n"


def write_json(path: PathLike, document: BaseModel) -> None:
    write_text(path, dump_json(document))


def load_dataset(manifest_path: PathLike, per_class_limit: Optional[int] = None) -> Dataset:
    """Load a dataset manifest; feature paths resolve relative to the manifest."""
    manifest_path = Path(manifest_path)
    manifest = read_json(manifest_path, DatasetManifest)
    base = manifest_path.parent

    kept = defaultdict(int)
    objects = []
    for entry in manifest.objects:
        if per_class_limit is not None and kept[entry.label] >= per_class_limit:
            continue
        kept[entry.label] += 1
        features = validate_features(read_matrix(base / entry.features))
        objects.append(LabeledObject(id=entry.id, label=entry.label, features=features))

    dataset = Dataset(objects=objects, num_classes=manifest.classes)
    dataset.validate()
    logger.info("Loaded %d objects from %s", len(dataset), manifest_path)
    return dataset


def save_dataset(dataset: Dataset, directory: PathLike, name: str) -> Path:
    """Write feature files under `directory/features` and a `name.json` manifest."""
    directory = Path(directory)
    feature_dir = directory / "features"
    try:
        feature_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create {feature_dir}: {exc.strerror}") from exc

    entries = []
    for obj in dataset.objects:
        relative = Path("features") / f"{obj.id}.txt"
        write_matrix(directory / relative, obj.features)
        entries.append(ManifestObject(id=obj.id, label=obj.label, features=relative.as_posix()))

    manifest_path = directory / f"{name}.json"
    write_json(manifest_path, DatasetManifest(classes=dataset.num_classes, objects=entries))
    return manifest_path
