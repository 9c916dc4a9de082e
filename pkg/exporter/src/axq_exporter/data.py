"""Dataset loading and the train/test split used for exported fixtures.

The sklearn digits set ships 1797 grayscale 8x8 images whose pixels are
integers 0..16.  Pixels are stored verbatim as uint8 codes with the affine
input quantization scale=1/16, zero_point=0, so dequantized codes land
exactly on the pixel/16 values the float model trains on: the input stage
is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

INPUT_SCALE = 1.0 / 16.0
INPUT_ZERO_POINT = 0


@dataclass(frozen=True)
class Split:
    """Float training inputs plus integer-coded test set."""

    train_x: np.ndarray  # (n_train, 1, 8, 8) float32 in [0, 1]
    train_y: np.ndarray  # (n_train,) int64
    test_codes: np.ndarray  # (n_test, 1, 8, 8) uint8, raw pixel codes 0..16
    test_y: np.ndarray  # (n_test,) uint8

    @property
    def test_x(self) -> np.ndarray:
        """Float view of the test codes, identical to what training saw."""
        return self.test_codes.astype(np.float32) * INPUT_SCALE


def load_split(seed: int, test_size: int = 1000) -> Split:
    """Stratified train/test split of the digits set, deterministic in seed."""
    digits = load_digits()
    codes = np.rint(digits.images).astype(np.uint8)[:, None, :, :]  # (N, 1, 8, 8)
    labels = digits.target.astype(np.int64)
    train_codes, test_codes, train_y, test_y = train_test_split(
        codes,
        labels,
        test_size=test_size,
        stratify=labels,
        random_state=seed,
    )
    return Split(
        train_x=train_codes.astype(np.float32) * INPUT_SCALE,
        train_y=train_y,
        test_codes=test_codes,
        test_y=test_y.astype(np.uint8),
    )
