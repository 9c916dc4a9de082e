"""Independent writer/reader for the AXQMODEL / AXIMAGES / AXLABELS files.

This module is implemented from the byte-level format description alone and
deliberately shares no code with any consumer of these files; producing
files that other tooling parses (and parsing files other tooling produced)
is the interoperability proof for the format.

Model container layout:

    bytes 0..7    magic b"AXQMODEL"
    bytes 8..11   uint32 little-endian manifest length L
    bytes 12..    UTF-8 JSON manifest of L bytes
    remainder     data section: raw tensor blobs, little-endian, C-order

The manifest is key-sorted JSON (", " / ": " separators, no trailing
newline) with:

    format_version  1
    checksum        {"algorithm": "sha256", "hex": <hex of data section>}
    input           {"scale": float, "zero_point": int, "shape": [C, H, W]}
    layers          ordered list of layer records
    tensors         name -> {dtype, shape, offset, length, scale?, zero_point?}
    metadata        free-form JSON object

Tensor blobs are packed in ascending name order so a given (manifest,
tensors) pair always serializes to the same bytes.  Offsets are relative
to the start of the data section.

Image set:  b"AXIMAGES" + uint32 LE count, channels, height, width + codes.
Label file: b"AXLABELS" + uint32 LE count + one uint8 class id per image.
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

_DTYPES = {"uint8": np.dtype("u1"), "int32": np.dtype("<i4")}


class FormatError(ValueError):
    """A container file violated the documented layout."""


def write_model(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Serialize a model container; offsets and checksum are computed here."""
    manifest = json.loads(json.dumps(manifest))  # deep copy, JSON-clean
    manifest["format_version"] = FORMAT_VERSION
    records = manifest.setdefault("tensors", {})
    data = bytearray()
    for name in sorted(tensors):  # canonical pack order
        arr = tensors[name]
        for dtype, np_dtype in _DTYPES.items():
            if arr.dtype == np_dtype:
                break
        else:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        rec = records.setdefault(name, {})
        rec.update(dtype=dtype, shape=list(arr.shape), offset=len(data), length=len(blob))
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


def read_model(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a model container back into (manifest, tensors by name)."""
    blob = Path(path).read_bytes()
    if blob[:8] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {blob[:8]!r}")
    if len(blob) < 12:
        raise FormatError("file truncated in header")
    manifest_len = int.from_bytes(blob[8:12], "little")
    if len(blob) < 12 + manifest_len:
        raise FormatError("file truncated in manifest")
    manifest = json.loads(blob[12 : 12 + manifest_len].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {manifest.get('format_version')!r}")
    data = blob[12 + manifest_len :]
    digest = hashlib.sha256(data).hexdigest()
    if digest != manifest.get("checksum", {}).get("hex"):
        raise FormatError("data section checksum mismatch")
    tensors = {}
    for name, rec in manifest.get("tensors", {}).items():
        if rec["dtype"] not in _DTYPES:
            raise FormatError(f"tensor {name!r}: unknown dtype {rec['dtype']!r}")
        lo, hi = rec["offset"], rec["offset"] + rec["length"]
        if not 0 <= lo <= hi <= len(data):
            raise FormatError(f"tensor {name!r} escapes the data section")
        arr = np.frombuffer(data[lo:hi], dtype=_DTYPES[rec["dtype"]])
        tensors[name] = arr.reshape(tuple(rec["shape"]))
    return manifest, tensors


def write_images(path, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 4:
        raise ValueError("images must be (count, channels, height, width)")
    with open(path, "wb") as fh:
        fh.write(IMAGES_MAGIC)
        for dim in images.shape:
            fh.write(int(dim).to_bytes(4, "little"))
        fh.write(images.tobytes())


def read_images(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:8] != IMAGES_MAGIC:
        raise FormatError(f"bad image magic {blob[:8]!r}")
    dims = tuple(int.from_bytes(blob[8 + 4 * i : 12 + 4 * i], "little") for i in range(4))
    if len(blob) != 24 + int(np.prod(dims)):
        raise FormatError("image payload does not match header dimensions")
    return np.frombuffer(blob[24:], dtype=np.uint8).reshape(dims)


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    with open(path, "wb") as fh:
        fh.write(LABELS_MAGIC)
        fh.write(int(labels.size).to_bytes(4, "little"))
        fh.write(labels.tobytes())


def read_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:8] != LABELS_MAGIC:
        raise FormatError(f"bad label magic {blob[:8]!r}")
    count = int.from_bytes(blob[8:12], "little")
    if len(blob) != 12 + count:
        raise FormatError("label payload does not match header count")
    return np.frombuffer(blob[12:], dtype=np.uint8)
