"""Command-line fixture exporter.

Trains the float CNN, quantizes it, verifies the integer reference meets
the accuracy gate, and writes three files into --out:

    <dataset>-cnn.axq           quantized model container
    <dataset>-test-images.bin   held-out test images (uint8 codes)
    <dataset>-test-labels.bin   their class labels

The manifest metadata records the quantized reference accuracy on the
exported test set plus sha256 digests of the reference logits and
predictions, so any other implementation of the same integer pipeline can
check bit-exact agreement against the files alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .data import load_split
from .model import train_model
from .quantize import quantize_model, reference_forward

DATASETS = ("digits",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axq-export",
        description="Train, quantize, and export a small CNN plus its test set.",
    )
    parser.add_argument("--dataset", choices=DATASETS, default="digits")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument(
        "--calibration",
        type=int,
        default=512,
        help="number of training images used to calibrate activation ranges",
    )
    parser.add_argument("--test-size", type=int, default=1000)
    parser.add_argument(
        "--min-accuracy",
        type=float,
        default=0.95,
        help="abort unless both float and quantized accuracy reach this",
    )
    return parser


def run_export(args: argparse.Namespace) -> dict:
    """Full pipeline;  returns a summary dict (also printed by main)."""
    split = load_split(args.seed, test_size=args.test_size)
    model, float_accuracy = train_model(split, seed=args.seed, epochs=args.epochs)
    if float_accuracy < args.min_accuracy:
        raise SystemExit(
            f"float model reached only {float_accuracy:.4f} accuracy "
            f"(< {args.min_accuracy}); increase --epochs"
        )

    calib = split.train_x[: args.calibration]
    if calib.shape[0] < args.calibration:
        raise SystemExit(
            f"only {calib.shape[0]} training images available for a "
            f"{args.calibration}-image calibration"
        )
    manifest, tensors = quantize_model(model, calib)

    logits, predictions = reference_forward(manifest, tensors, split.test_codes)
    accuracy = float(np.mean(predictions == split.test_y))
    if accuracy < args.min_accuracy:
        raise SystemExit(
            f"quantized model reached only {accuracy:.4f} accuracy "
            f"(< {args.min_accuracy}); increase --epochs or --calibration"
        )

    manifest["metadata"] = {
        "dataset": args.dataset,
        "exporter": "axq-exporter 0.1.0",
        "seed": args.seed,
        "epochs": args.epochs,
        "calibration_images": int(calib.shape[0]),
        "float_accuracy": float_accuracy,
        "reference_accuracy": accuracy,
        "reference_logits_sha256": hashlib.sha256(logits.tobytes()).hexdigest(),
        "reference_predictions_sha256": hashlib.sha256(predictions.tobytes()).hexdigest(),
    }

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "model": out / f"{args.dataset}-cnn.axq",
        "images": out / f"{args.dataset}-test-images.bin",
        "labels": out / f"{args.dataset}-test-labels.bin",
    }
    formats.write_model(paths["model"], manifest, tensors)
    formats.write_images(paths["images"], split.test_codes)
    formats.write_labels(paths["labels"], split.test_y)

    return {
        "float_accuracy": float_accuracy,
        "reference_accuracy": accuracy,
        "n_test": int(split.test_y.size),
        "files": {key: str(path) for key, path in paths.items()},
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    summary = run_export(args)
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
