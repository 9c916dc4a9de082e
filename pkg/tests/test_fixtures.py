"""Shipped fixture files: structure, interop digests, canonical bytes.

The fixtures were produced by an independent tool (see exporter/) that
implements the container formats and the exact integer inference pipeline
on its own.  These tests prove the two implementations agree bit for bit
through the files alone.
"""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from axsim import (
    AxMultConfig,
    Conv2dLayer,
    DenseLayer,
    MultKind,
    evaluate,
    forward,
    load_model,
    read_dataset,
    read_model_container,
    write_model_container,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
MODEL = FIXTURES / "digits-cnn.axq"
IMAGES = FIXTURES / "digits-test-images.bin"
LABELS = FIXTURES / "digits-test-labels.bin"

pytestmark = pytest.mark.skipif(
    not MODEL.exists(), reason="fixtures not generated"
)


@pytest.fixture(scope="module")
def fixture_model():
    return load_model(MODEL)


@pytest.fixture(scope="module")
def fixture_data():
    return read_dataset(IMAGES, LABELS)


def test_model_structure(fixture_model):
    model = fixture_model
    assert model.input_shape == (1, 8, 8)
    convs = [l for l in model.layers if isinstance(l, Conv2dLayer)]
    denses = [l for l in model.layers if isinstance(l, DenseLayer)]
    assert [c.weight.codes.shape for c in convs] == [(8, 1, 3, 3), (16, 8, 3, 3)]
    assert [d.weight.codes.shape for d in denses] == [(10, 64)]
    assert model.reference_accuracy is not None


def test_dataset_shape(fixture_data):
    images, labels = fixture_data
    assert images.shape == (1000, 1, 8, 8)
    assert labels.shape == (1000,)
    assert int(images.max()) <= 16


def test_exact_logits_match_producer_digest(fixture_model, fixture_data):
    """Bit-exact agreement with the producer's own inference implementation."""
    images, _ = fixture_data
    result = forward(fixture_model, images, AxMultConfig(MultKind.EXACT, 0))
    meta = fixture_model.metadata
    assert (
        hashlib.sha256(result.logits.tobytes()).hexdigest()
        == meta["reference_logits_sha256"]
    )
    assert (
        hashlib.sha256(result.predictions.astype(np.uint8).tobytes()).hexdigest()
        == meta["reference_predictions_sha256"]
    )


def test_exact_accuracy_matches_manifest(fixture_model, fixture_data):
    images, labels = fixture_data
    report = evaluate(fixture_model, images, labels, AxMultConfig(MultKind.EXACT, 0))
    assert report.accuracy == fixture_model.reference_accuracy
    assert report.accuracy >= 0.95


def test_container_rewrite_is_byte_identical(tmp_path):
    """Both writers use the same canonical layout, so a round trip through
    this library reproduces the producer's bytes exactly."""
    manifest, tensors = read_model_container(MODEL)
    out = tmp_path / "rewrite.axq"
    write_model_container(out, manifest, tensors)
    assert out.read_bytes() == MODEL.read_bytes()
