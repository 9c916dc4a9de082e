"""Trains and quantizes a small digits CNN and exports it as fixture files.

The package owns its container writer and its integer inference reference;
it interoperates with consumers of the files purely through the documented
byte formats.
"""

from .data import INPUT_SCALE, INPUT_ZERO_POINT, Split, load_split
from .export import main, run_export
from .formats import (
    FormatError,
    read_images,
    read_labels,
    read_model,
    write_images,
    write_labels,
    write_model,
)
from .model import DigitsCnn, train_model
from .quantize import affine_range, encode, quantize_model, reference_forward

__all__ = [
    "INPUT_SCALE",
    "INPUT_ZERO_POINT",
    "Split",
    "load_split",
    "main",
    "run_export",
    "FormatError",
    "read_images",
    "read_labels",
    "read_model",
    "write_images",
    "write_labels",
    "write_model",
    "DigitsCnn",
    "train_model",
    "affine_range",
    "encode",
    "quantize_model",
    "reference_forward",
]

__version__ = "0.1.0"
