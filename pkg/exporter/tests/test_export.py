"""End-to-end exporter pipeline: gates, metadata, interop, determinism.

The interop test talks to the simulator exclusively through its installed
command-line interface and the files on disk — the exporter never imports
it.
"""

import hashlib
import json
import subprocess

import numpy as np
import pytest

from axq_exporter import formats
from axq_exporter.export import build_parser, run_export
from axq_exporter.quantize import reference_forward


def export_into(directory, **overrides):
    argv = ["--out", str(directory)]
    for key, value in overrides.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return run_export(build_parser().parse_args(argv))


@pytest.fixture(scope="session")
def exported(tmp_path_factory):
    out = tmp_path_factory.mktemp("export")
    summary = export_into(out, epochs=60, seed=3)
    return out, summary


def test_accuracy_gates(exported):
    _, summary = exported
    assert summary["float_accuracy"] >= 0.95
    assert summary["reference_accuracy"] >= 0.95
    assert summary["n_test"] == 1000


def test_underfit_model_is_refused(tmp_path):
    with pytest.raises(SystemExit, match="accuracy"):
        export_into(tmp_path, epochs=1, seed=3)


def test_metadata_digests_match_recomputation(exported):
    out, summary = exported
    manifest, tensors = formats.read_model(out / "digits-cnn.axq")
    images = formats.read_images(out / "digits-test-images.bin")
    labels = formats.read_labels(out / "digits-test-labels.bin")
    logits, predictions = reference_forward(manifest, tensors, images)
    meta = manifest["metadata"]
    assert meta["reference_logits_sha256"] == hashlib.sha256(logits.tobytes()).hexdigest()
    assert (
        meta["reference_predictions_sha256"]
        == hashlib.sha256(predictions.tobytes()).hexdigest()
    )
    assert meta["reference_accuracy"] == float(np.mean(predictions == labels))
    assert meta["calibration_images"] == 512


def test_exported_files_parse_and_cross_check(exported):
    out, _ = exported
    manifest, tensors = formats.read_model(out / "digits-cnn.axq")
    images = formats.read_images(out / "digits-test-images.bin")
    labels = formats.read_labels(out / "digits-test-labels.bin")
    assert images.shape == (1000, 1, 8, 8)
    assert images.max() <= 16  # raw digits pixel codes
    assert labels.shape == (1000,)
    assert set(np.unique(labels)) <= set(range(10))
    assert manifest["input"]["shape"] == [1, 8, 8]
    weight_names = {
        rec["weight"] for rec in manifest["layers"] if "weight" in rec
    }
    assert weight_names <= set(tensors)


def test_simulator_reads_export_and_agrees(exported):
    """Independent consumer accepts the files and reproduces the accuracy."""
    out, _ = exported
    manifest, _ = formats.read_model(out / "digits-cnn.axq")
    proc = subprocess.run(
        [
            "axsim",
            "infer",
            "--model",
            str(out / "digits-cnn.axq"),
            "--images",
            str(out / "digits-test-images.bin"),
            "--labels",
            str(out / "digits-test-labels.bin"),
            "--kind",
            "exact",
            "--format",
            "json",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    accuracy = next(
        row["value"] for row in report["results"] if row["metric"] == "accuracy"
    )
    assert accuracy == manifest["metadata"]["reference_accuracy"]


def test_regeneration_is_byte_identical(tmp_path):
    first = tmp_path / "one"
    second = tmp_path / "two"
    export_into(first, epochs=8, seed=5, min_accuracy=0.0)
    export_into(second, epochs=8, seed=5, min_accuracy=0.0)
    for name in ("digits-cnn.axq", "digits-test-images.bin", "digits-test-labels.bin"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
