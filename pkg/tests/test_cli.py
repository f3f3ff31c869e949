import json

import numpy as np
import pytest

from main import run
from storage import format_matrix, parse_matrix, write_matrix


@pytest.fixture
def views_file(tmp_path, block_features):
    path = tmp_path / "views.txt"
    write_matrix(path, block_features)
    return path


@pytest.fixture
def random_views(tmp_path):
    path = tmp_path / "random.txt"
    write_matrix(path, np.random.default_rng(5).uniform(0.0, 1.0, size=(6, 5)))
    return path


def invoke(capsys, *argv):
    code = run([str(arg) for arg in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cluster_feature_file(capsys, views_file):
    code, out, _ = invoke(capsys, "cluster", views_file)
    assert code == 0
    document = json.loads(out)
    assert {frozenset(c) for c in document["clusters"]} == {frozenset({0, 1, 2}), frozenset({3, 4})}
    assert document["config"]["tol"] == 1e-8


def test_cluster_affinity_file(capsys, tmp_path, block_affinity):
    path = tmp_path / "affinity.txt"
    write_matrix(path, block_affinity)
    code, out, _ = invoke(capsys, "cluster", path, "--affinity")
    assert code == 0
    assert {frozenset(c) for c in json.loads(out)["clusters"]} == {frozenset({0, 1, 2}), frozenset({3, 4})}


def test_pool_f_max_prints_channel_max(capsys, views_file, block_features):
    code, out, _ = invoke(capsys, "pool", views_file, "--structure", "f-max")
    assert code == 0
    np.testing.assert_array_equal(parse_matrix(out)[0], block_features.max(axis=0))


def test_pool_writes_output_and_trace(capsys, tmp_path, views_file):
    output = tmp_path / "pooled.txt"
    trace = tmp_path / "trace.json"
    code, out, _ = invoke(capsys, "pool", views_file, "-o", output, "--trace-output", trace)
    assert code == 0
    assert out == ""
    assert parse_matrix(output.read_text()).shape == (1, 4)
    document = json.loads(trace.read_text())
    assert document["node_counts"][:2] == [5, 2]
    assert document["levels"][0]["mode"] == "max"


def test_pool_is_byte_identical_across_runs(capsys, random_views):
    _, first, _ = invoke(capsys, "pool", random_views)
    _, second, _ = invoke(capsys, "pool", random_views)
    assert first == second


def test_gradcheck_passes(capsys, random_views):
    code, out, _ = invoke(capsys, "gradcheck", random_views)
    assert code == 0
    document = json.loads(out)
    assert document["passed"] is True
    assert document["structure"] == "ds-alt-f-max"


def test_gradcheck_failure_exits_with_error(capsys, random_views):
    code, out, err = invoke(capsys, "gradcheck", random_views, "--threshold", "0")
    assert code == 2
    assert json.loads(out)["passed"] is False
    assert "gradient check failed" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["pool"],
        ["pool", "x.txt", "--structure", "sum"],
        ["cluster", "x.txt", "--tol", "abc"],
    ],
)
def test_usage_errors_exit_1(capsys, argv):
    code, out, err = invoke(capsys, *argv)
    assert code == 1
    assert out == ""
    assert err.startswith("usage error:")


def test_help_exits_0(capsys):
    code, out, _ = invoke(capsys, "pool", "--help")
    assert code == 0
    assert "--structure" in out


def test_missing_input_exits_2(capsys, tmp_path):
    code, _, err = invoke(capsys, "cluster", tmp_path / "nowhere.txt")
    assert code == 2
    assert err.startswith("error:")


def test_negative_features_exit_2(capsys, tmp_path):
    path = tmp_path / "neg.txt"
    path.write_text(format_matrix(np.array([[1.0, -1.0], [0.0, 1.0]])))
    code, _, err = invoke(capsys, "pool", path)
    assert code == 2
    assert "negative" in err


def test_bad_knob_exits_2(capsys, views_file):
    code, _, err = invoke(capsys, "pool", views_file, "--depth", "0")
    assert code == 2
    assert "depth" in err


def test_synth_train_eval_flow(capsys, tmp_path):
    data = tmp_path / "data"
    code, out, _ = invoke(
        capsys, "synth", "--output-dir", data, "--classes", "3", "--per-class", "8",
        "--views", "6", "--dim", "12", "--test-per-class", "2", "--seed", "4",
    )
    assert code == 0
    manifests = json.loads(out)["manifests"]
    assert set(manifests) == {"train", "test"}

    model = tmp_path / "model.json"
    code, out, _ = invoke(capsys, "train", manifests["train"], "--model", model, "--epochs", "50", "--learning-rate", "0.1")
    assert code == 0
    trained = json.loads(out)
    assert trained["mode"] == "fast"
    assert trained["node_counts"][0] == 6
    assert model.exists()

    code, out, _ = invoke(capsys, "eval", manifests["test"], "--model", model)
    assert code == 0
    evaluation = json.loads(out)
    assert evaluation["objects"] == 6
    assert 0.0 <= evaluation["accuracy"] <= 1.0

    hierarchy = tmp_path / "hierarchy.json"
    code, out, _ = invoke(capsys, "hierarchy", manifests["train"], "-o", hierarchy)
    assert code == 0
    assert json.loads(out)["node_counts"][0] == 6

    e2e_model = tmp_path / "e2e.json"
    code, out, _ = invoke(
        capsys, "train", manifests["train"], "--mode", "e2e", "--hierarchy", hierarchy,
        "--model", e2e_model, "--epochs", "5", "--learning-rate", "0.1",
    )
    assert code == 0
    trained = json.loads(out)
    assert trained["initial_loss"] is not None
    assert json.loads(e2e_model.read_text())["front_end"] is not None

    code, out, _ = invoke(capsys, "eval", manifests["test"], "--model", e2e_model)
    assert code == 0


def test_e2e_rejects_mismatched_hierarchy(capsys, tmp_path):
    data = tmp_path / "data"
    invoke(capsys, "synth", "--output-dir", data, "--classes", "2", "--per-class", "4", "--views", "4", "--dim", "6")
    manifest = data / "dataset.json"
    hierarchy = tmp_path / "hierarchy.json"
    assert invoke(capsys, "hierarchy", manifest, "--structure", "ds-avg-f-max", "-o", hierarchy)[0] == 0
    code, _, err = invoke(
        capsys, "train", manifest, "--mode", "e2e", "--hierarchy", hierarchy, "--model", tmp_path / "m.json",
    )
    assert code == 2
    assert "ds-avg-f-max" in err


def test_hierarchy_to_stdout(capsys, tmp_path):
    data = tmp_path / "data"
    invoke(capsys, "synth", "--output-dir", data, "--classes", "2", "--per-class", "3", "--views", "6", "--dim", "9")
    code, out, _ = invoke(capsys, "hierarchy", data / "dataset.json")
    assert code == 0
    document = json.loads(out)
    assert document["n"] == 6
    assert document["structure"] == "ds-alt-f-max"


def test_compare_is_reproducible(capsys):
    argv = [
        "compare", "--classes", "2", "--per-class", "5", "--views", "4", "--dim", "8",
        "--test-per-class", "2", "--seeds", "2", "--epochs", "10",
    ]
    code, first, _ = invoke(capsys, *argv)
    assert code == 0
    _, second, _ = invoke(capsys, *argv)
    assert first == second
    document = json.loads(first)
    assert document["seeds"] == [0, 1]
    assert [r["structure"] for r in document["results"]] == ["f-max", "ds-alt-f-max"]


def test_binary_input_exits_2(capsys, tmp_path):
    path = tmp_path / "binary.txt"
    path.write_bytes(b"1 2\n\xff 1\n")
    code, out, err = invoke(capsys, "cluster", path)
    assert code == 2
    assert out == ""
    assert "UTF-8" in err


def test_output_in_missing_directory_exits_2_before_work(capsys, tmp_path, views_file):
    output = tmp_path / "missing" / "out.json"
    code, out, err = invoke(capsys, "cluster", views_file, "--output", output)
    assert code == 2
    assert out == ""
    assert "does not exist" in err
    assert not output.parent.exists()


def test_every_subcommand_reruns_byte_identically(capsys, tmp_path, views_file):
    def twice(*argv, files=()):
        runs = []
        for _ in range(2):
            code, out, _ = invoke(capsys, *argv)
            assert code == 0
            runs.append((out, [path.read_bytes() for path in files]))
        assert runs[0] == runs[1]
        return runs[0][0]

    twice("cluster", views_file)

    data = tmp_path / "data"
    out = twice(
        "synth", "--output-dir", data, "--classes", "2", "--per-class", "5",
        "--views", "6", "--dim", "8", "--test-per-class", "1", "--seed", "3",
        files=[data / "train.json", data / "test.json"],
    )
    manifests = json.loads(out)["manifests"]

    twice("hierarchy", manifests["train"])

    model = tmp_path / "model.json"
    twice("train", manifests["train"], "--model", model, "--epochs", "10", files=[model])
    twice("eval", manifests["test"], "--model", model)
