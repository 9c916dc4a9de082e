"""Binary container formats for quantized models and image datasets.

These formats are the boundary between the simulator and whatever produced
the network, so they are specified byte-for-byte (see docs/formats.md):

Model container:
    bytes 0..7    magic b"AXQMODEL"
    bytes 8..11   uint32 little-endian manifest length L
    bytes 12..    UTF-8 JSON manifest of L bytes
    remainder     data section: raw tensor blobs, little-endian, C-order

The manifest carries format_version, a sha256 checksum of the data
section, the input quantization, the ordered layer list, and per-tensor
records {dtype, shape, offset, length, scale, zero_point} with offsets
relative to the start of the data section.

Image set:
    bytes 0..7    magic b"AXIMAGES"
    bytes 8..23   uint32 LE count, channels, height, width
    remainder     count*channels*height*width bytes of uint8 codes

Label file:
    bytes 0..7    magic b"AXLABELS"
    bytes 8..11   uint32 LE count
    remainder     count bytes of uint8 class ids

Parsers raise ModelFormatError naming the byte offset at which a file
stopped making sense; a format_version ahead of this reader and a checksum
mismatch are distinct, explicit failures.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MODEL_MAGIC = b"AXQMODEL"
IMAGES_MAGIC = b"AXIMAGES"
LABELS_MAGIC = b"AXLABELS"
FORMAT_VERSION = 1

_DTYPES = {"uint8": np.uint8, "int32": np.dtype("<i4")}


class ModelFormatError(ValueError):
    """A container violated the format; offset points at the problem."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _need(blob: bytes, end: int, what: str) -> None:
    if len(blob) < end:
        raise ModelFormatError(f"file truncated while reading {what}", len(blob))


def read_model_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a model container into (manifest, tensors keyed by name)."""
    blob = Path(path).read_bytes()
    _need(blob, 8, "magic")
    if blob[:8] != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {blob[:8]!r}", 0)
    _need(blob, 12, "manifest length")
    manifest_len = int.from_bytes(blob[8:12], "little")
    _need(blob, 12 + manifest_len, "manifest")
    try:
        manifest = json.loads(blob[12 : 12 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"manifest is not valid JSON: {exc}", 12) from None

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"format_version {version!r} not supported (reader expects {FORMAT_VERSION})"
        )
    data = blob[12 + manifest_len :]
    checksum = manifest.get("checksum", {})
    if checksum.get("algorithm") != "sha256":
        raise ModelFormatError(
            f"unsupported checksum algorithm {checksum.get('algorithm')!r}"
        )
    digest = hashlib.sha256(data).hexdigest()
    if digest != checksum.get("hex"):
        raise ModelFormatError(
            f"data checksum mismatch: manifest says {checksum.get('hex')}, "
            f"data hashes to {digest}"
        )

    tensors: dict[str, np.ndarray] = {}
    base = 12 + manifest_len
    for name, rec in manifest.get("tensors", {}).items():
        dtype = rec.get("dtype")
        if dtype not in _DTYPES:
            raise ModelFormatError(f"tensor {name!r} has unknown dtype {dtype!r}")
        offset, length = rec["offset"], rec["length"]
        if offset < 0 or length < 0 or offset + length > len(data):
            raise ModelFormatError(
                f"tensor {name!r} blob [{offset}, {offset + length}) escapes the "
                f"data section",
                base + min(offset, len(data)),
            )
        arr = np.frombuffer(data[offset : offset + length], dtype=_DTYPES[dtype])
        shape = tuple(rec["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ModelFormatError(
                f"tensor {name!r} length {length} does not match shape {shape}"
            )
        tensors[name] = arr.reshape(shape)
    return manifest, tensors


def write_model_container(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Serialize manifest + tensors; offsets and checksum are filled in here.

    Tensor records in the manifest may carry scale/zero_point already;
    dtype, shape, offset and length are (re)written from the arrays.
    """
    manifest = json.loads(json.dumps(manifest))  # deep copy, JSON-clean
    manifest["format_version"] = FORMAT_VERSION
    records = manifest.setdefault("tensors", {})
    data = bytearray()
    # blobs pack in ascending name order so writes are canonical
    for name in sorted(tensors):
        arr = tensors[name]
        if arr.dtype == np.uint8:
            dtype = "uint8"
        elif arr.dtype in (np.int32, np.dtype("<i4")):
            dtype = "int32"
        else:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        rec = records.setdefault(name, {})
        rec.update(
            dtype=dtype,
            shape=list(arr.shape),
            offset=len(data),
            length=len(blob),
        )
        data.extend(blob)
    manifest["checksum"] = {
        "algorithm": "sha256",
        "hex": hashlib.sha256(bytes(data)).hexdigest(),
    }
    body = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(len(body).to_bytes(4, "little"))
        fh.write(body)
        fh.write(bytes(data))


def read_images(path) -> np.ndarray:
    """Load an image blob as a (count, channels, height, width) uint8 array."""
    blob = Path(path).read_bytes()
    _need(blob, 8, "magic")
    if blob[:8] != IMAGES_MAGIC:
        raise ModelFormatError(f"bad image magic {blob[:8]!r}", 0)
    _need(blob, 24, "image header")
    count, ch, h, w = (
        int.from_bytes(blob[8 + 4 * i : 12 + 4 * i], "little") for i in range(4)
    )
    expected = 24 + count * ch * h * w
    if len(blob) != expected:
        raise ModelFormatError(
            f"image payload is {len(blob) - 24} bytes, header implies "
            f"{expected - 24}",
            min(len(blob), expected),
        )
    return np.frombuffer(blob[24:], dtype=np.uint8).reshape(count, ch, h, w)


def write_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 4:
        raise ValueError("images must be (count, channels, height, width)")
    with open(path, "wb") as fh:
        fh.write(IMAGES_MAGIC)
        for dim in images.shape:
            fh.write(int(dim).to_bytes(4, "little"))
        fh.write(images.tobytes())


def read_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    _need(blob, 8, "magic")
    if blob[:8] != LABELS_MAGIC:
        raise ModelFormatError(f"bad label magic {blob[:8]!r}", 0)
    _need(blob, 12, "label header")
    count = int.from_bytes(blob[8:12], "little")
    if len(blob) != 12 + count:
        raise ModelFormatError(
            f"label payload is {len(blob) - 12} bytes, header says {count}",
            min(len(blob), 12 + count),
        )
    return np.frombuffer(blob[12:], dtype=np.uint8)


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    with open(path, "wb") as fh:
        fh.write(LABELS_MAGIC)
        fh.write(int(labels.size).to_bytes(4, "little"))
        fh.write(labels.tobytes())


def read_dataset(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Load and cross-validate an image blob and its label file."""
    images = read_images(images_path)
    labels = read_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ModelFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    return images, labels
