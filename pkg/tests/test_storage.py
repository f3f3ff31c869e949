import json

import numpy as np
import pytest

from exceptions import InvalidInputError, ShapeMismatchError
from models import Dataset, LabeledObject
from storage import format_matrix, load_dataset, parse_matrix, read_matrix, save_dataset, write_matrix


def test_parse_matrix():
    matrix = parse_matrix("2 3\n1 0 0.5\n\n0 2 1e-3\n")
    np.testing.assert_array_equal(matrix, [[1.0, 0.0, 0.5], [0.0, 2.0, 0.001]])


def test_format_matrix_is_exact():
    matrix = np.array([[0.1, 1.0 / 3.0], [2.0, 1e-17]])
    assert format_matrix(matrix) == "2 2\n0.1 0.3333333333333333\n2.0 1e-17\n"
    np.testing.assert_array_equal(parse_matrix(format_matrix(matrix)), matrix)


def test_vector_formats_as_single_row():
    assert format_matrix(np.array([1.5, 0.0])) == "1 2\n1.5 0.0\n"


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "empty"),
        ("2\n1 2\n", "header"),
        ("a b\n1\n", "non-integer"),
        ("0 2\n", "positive"),
        ("2 2\n1 2\n", "declares 2 rows"),
        ("1 2\n1 2 3\n", "expected 2"),
        ("1 2\n1 x\n", "not numeric"),
        ("1 999999999999\n1 2\n", "expected 999999999999"),
        ("999999999999 2\n1 2\n", "declares 999999999999 rows"),
    ],
)
def test_parse_matrix_errors(text, message):
    with pytest.raises(InvalidInputError, match=message):
        parse_matrix(text)


def test_read_missing_file(tmp_path):
    with pytest.raises(InvalidInputError, match="cannot read"):
        read_matrix(tmp_path / "missing.txt")


def test_read_binary_file(tmp_path):
    path = tmp_path / "binary.txt"
    path.write_bytes(b"2 2\n\xff\xfe 1\n0 1\n")
    with pytest.raises(InvalidInputError, match="UTF-8"):
        read_matrix(path)


def test_write_into_missing_directory(tmp_path):
    with pytest.raises(InvalidInputError, match="cannot write"):
        write_matrix(tmp_path / "missing" / "m.txt", np.ones((1, 1)))


def test_write_then_read(tmp_path, rng):
    matrix = rng.uniform(size=(4, 3))
    write_matrix(tmp_path / "m.txt", matrix)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.txt"), matrix)


def make_dataset(rng, per_class=3):
    objects = [
        LabeledObject(id=f"c{label}_{k}", label=label, features=rng.uniform(size=(3, 2)))
        for label in range(2)
        for k in range(per_class)
    ]
    return Dataset(objects=objects, num_classes=2)


def test_saved_dataset_loads_back(tmp_path, rng):
    dataset = make_dataset(rng)
    manifest = save_dataset(dataset, tmp_path / "data", "train")
    assert manifest == tmp_path / "data" / "train.json"
    document = json.loads(manifest.read_text())
    assert document["objects"][0]["features"] == "features/c0_0.txt"

    loaded = load_dataset(manifest)
    assert [obj.id for obj in loaded.objects] == [obj.id for obj in dataset.objects]
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    for a, b in zip(loaded.objects, dataset.objects):
        np.testing.assert_array_equal(a.features, b.features)


def test_per_class_limit_keeps_first_objects(tmp_path, rng):
    manifest = save_dataset(make_dataset(rng), tmp_path, "all")
    loaded = load_dataset(manifest, per_class_limit=2)
    assert [obj.id for obj in loaded.objects] == ["c0_0", "c0_1", "c1_0", "c1_1"]


def write_manifest(tmp_path, objects, classes=2):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"classes": classes, "objects": objects}))
    return path


def test_manifest_errors(tmp_path):
    write_matrix(tmp_path / "a.txt", np.ones((3, 2)))
    write_matrix(tmp_path / "b.txt", np.ones((4, 2)))
    write_matrix(tmp_path / "neg.txt", -np.ones((3, 2)))

    with pytest.raises(InvalidInputError, match="label 5"):
        load_dataset(write_manifest(tmp_path, [{"id": "x", "label": 5, "features": "a.txt"}]))
    with pytest.raises(ShapeMismatchError):
        load_dataset(
            write_manifest(
                tmp_path,
                [{"id": "x", "label": 0, "features": "a.txt"}, {"id": "y", "label": 1, "features": "b.txt"}],
            )
        )
    with pytest.raises(InvalidInputError, match="negative"):
        load_dataset(write_manifest(tmp_path, [{"id": "x", "label": 0, "features": "neg.txt"}]))
    with pytest.raises(InvalidInputError, match="validation error"):
        load_dataset(write_manifest(tmp_path, []))
    with pytest.raises(InvalidInputError, match="cannot read"):
        load_dataset(write_manifest(tmp_path, [{"id": "x", "label": 0, "features": "gone.txt"}]))
