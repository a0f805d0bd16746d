import csv
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import pytest

from builders import synthetic_idx

from evodag.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_address
from evodag.genome import minimal_genome, save_genome
from evodag.search.stats_logger import BEST_GENOME_FILE, OPERATOR_COLUMNS, PROGRESS_FILE, RETRAIN_COLUMNS

SMALL_RUN = """\
[search]
population_size = 3
max_evaluations = 3
checkpoint_interval = 0

[dataset]
num_classes = 3
train_count = 30

[training]
epochs = 1
batch_size = 10
"""


@pytest.fixture
def small_run(tmp_path):
    """Writes a tiny IDX dataset plus a matching configuration and returns the common search arguments."""
    images, labels = synthetic_idx(tmp_path, count=40)
    config = tmp_path / "config.toml"
    config.write_text(SMALL_RUN)
    output_dir = tmp_path / "run"
    return ["--config", str(config), "--train-images", images, "--train-labels", labels, "--output-dir", str(output_dir)]


def test_parse_address():
    assert parse_address("example.org:5000") == ("example.org", 5000)
    assert parse_address("5000", "0.0.0.0") == ("0.0.0.0", 5000)


def test_dump_config_round_trips(tmp_path, capsys):
    assert main(["search", "--dump-config", "--seed", "7", "--no-node-ops"]) == EXIT_OK
    text = capsys.readouterr().out
    document = tomllib.loads(text)
    assert document["search"]["seed"] == 7
    assert document["operators"]["node_ops_enabled"] is False

    path = tmp_path / "dumped.toml"
    path.write_text(text)
    assert main(["search", "--config", str(path), "--dump-config"]) == EXIT_OK
    assert capsys.readouterr().out == text


def test_search_needs_a_dataset(capsys):
    assert main(["search"]) == EXIT_USAGE
    assert "train_images" in capsys.readouterr().err


def test_missing_dataset_file(tmp_path):
    missing = str(tmp_path / "nothing")
    assert main(["search", "--train-images", missing, "--train-labels", missing]) == EXIT_DATA


def test_invalid_config_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("[search]\npopulation_size = 1\n")
    assert main(["search", "--config", str(path), "--dump-config"]) == EXIT_USAGE


def test_unknown_option():
    assert main(["search", "--warp-drive"]) == EXIT_USAGE


def test_export(tmp_path, capsys):
    assert main(["export", str(tmp_path / "missing.json")]) == EXIT_DATA

    path = tmp_path / "genome.json"
    save_genome(minimal_genome((6, 6), 2), str(path))
    assert main(["export", str(path)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("digraph genome {")

    dot = tmp_path / "genome.dot"
    assert main(["export", str(path), "--output", str(dot)]) == EXIT_OK
    assert "n0 -> n1" in dot.read_text()


def test_search_retrain_and_stats(small_run, tmp_path, capsys):
    assert main(["search", *small_run]) == EXIT_OK
    output_dir = small_run[-1]
    with open(os.path.join(output_dir, PROGRESS_FILE), newline="") as f:
        assert [row["evaluation"] for row in csv.DictReader(f)] == ["1", "2", "3"]
    capsys.readouterr()

    test_images, test_labels = synthetic_idx(tmp_path, count=20, seed=5, prefix="test")
    retrain_csv = tmp_path / "retrain.csv"
    arguments = [
        "retrain",
        *small_run[:6],
        "--genome", os.path.join(output_dir, BEST_GENOME_FILE),
        "--test-images", test_images,
        "--test-labels", test_labels,
        "--reps", "2",
        "--output", str(retrain_csv),
    ]
    assert main(arguments) == EXIT_OK
    with open(retrain_csv, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [row["rep"] for row in rows] == ["0", "1"]
    assert tuple(rows[0]) == RETRAIN_COLUMNS
    assert all(0.0 <= float(row["test_error"]) <= 1.0 for row in rows)
    for row in rows:
        assert math.isfinite(float(row["val_loss"])) and float(row["val_loss"]) > 0.0
        assert math.isfinite(float(row["test_loss"])) and float(row["test_loss"]) > 0.0
    capsys.readouterr()

    assert main(["stats", os.path.join(output_dir, "checkpoint")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(OPERATOR_COLUMNS)
    assert lines[1].startswith("initial,1,")


def test_retrain_needs_test_files(small_run, tmp_path):
    path = tmp_path / "genome.json"
    save_genome(minimal_genome((6, 6), 3), str(path))
    assert main(["retrain", *small_run[:6], "--genome", str(path), "--reps", "1"]) == EXIT_USAGE


def test_stats_on_a_missing_directory(tmp_path):
    assert main(["stats", str(tmp_path / "nothing")]) == EXIT_DATA
