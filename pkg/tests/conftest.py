"""Shared fixtures: approximate configs and a small on-disk model."""

from __future__ import annotations

import numpy as np
import pytest

from axsim.inference import load_model
from axsim.modelfile import write_images, write_labels, write_model_container
from axsim.multipliers import AxMultConfig, MultKind

# the m ranges the toolkit targets for each family
APPROX_CONFIGS = [
    AxMultConfig(MultKind.PERFORATED, m) for m in (1, 2, 3)
] + [
    AxMultConfig(MultKind.RECURSIVE, m) for m in (2, 3, 4, 5)
] + [
    AxMultConfig(MultKind.TRUNCATED, m) for m in (4, 5, 6, 7)
]

EXACT = AxMultConfig(MultKind.EXACT)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end criteria gate")


def build_toy_model(path, seed: int = 11):
    """Small conv/pool/dense network with random but valid weights."""
    rng = np.random.default_rng(seed)
    conv_w = rng.integers(80, 176, size=(4, 1, 3, 3), dtype=np.uint8)
    conv_b = rng.integers(-50, 50, size=(4,), dtype=np.int32)
    dense_w = rng.integers(0, 256, size=(4, 4 * 4 * 4), dtype=np.uint8)
    dense_b = rng.integers(-100, 100, size=(4,), dtype=np.int32)
    manifest = {
        "input": {"shape": [1, 8, 8], "scale": 1.0 / 255.0, "zero_point": 0},
        "tensors": {
            "conv.w": {"scale": 0.012, "zero_point": 128},
            "conv.b": {},
            "fc.w": {"scale": 0.02, "zero_point": 128},
            "fc.b": {},
        },
        "layers": [
            {
                "type": "conv2d",
                "name": "conv",
                "weight": "conv.w",
                "bias": "conv.b",
                "stride": 1,
                "padding": 1,
                "scale": 0.03,
                "zero_point": 12,
            },
            {"type": "relu"},
            {"type": "maxpool2d", "kernel": 2},
            {"type": "flatten"},
            {
                "type": "dense",
                "name": "fc",
                "weight": "fc.w",
                "bias": "fc.b",
                "scale": 0.08,
                "zero_point": 128,
            },
            {"type": "argmax"},
        ],
        "metadata": {"reference_accuracy": 1.0},
    }
    write_model_container(
        path,
        manifest,
        {"conv.w": conv_w, "conv.b": conv_b, "fc.w": dense_w, "fc.b": dense_b},
    )
    return manifest


@pytest.fixture(scope="session")
def toy_model_files(tmp_path_factory):
    """Paths for a toy model plus a 200-image dataset labeled by the
    model's own exact predictions (so the exact path scores 1.0)."""
    from axsim.inference import forward

    root = tmp_path_factory.mktemp("toy")
    model_path = root / "toy.axq"
    build_toy_model(model_path)
    rng = np.random.default_rng(5)
    images = rng.integers(0, 256, size=(200, 1, 8, 8), dtype=np.uint8)
    model = load_model(model_path)
    labels = forward(model, images, EXACT).predictions.astype(np.uint8)
    images_path = root / "toy_images.bin"
    labels_path = root / "toy_labels.bin"
    write_images(images_path, images)
    write_labels(labels_path, labels)
    return {
        "model": model_path,
        "images": images_path,
        "labels": labels_path,
        "n": images.shape[0],
    }


@pytest.fixture(scope="session")
def toy_model(toy_model_files):
    return load_model(toy_model_files["model"])
