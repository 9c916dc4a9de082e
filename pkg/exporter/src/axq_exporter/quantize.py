"""Post-training quantization and an independent integer inference reference.

Every tensor gets per-tensor asymmetric affine uint8 quantization,
value = scale * (code - zero_point), with the range widened to include 0
so the zero point is always an exact code.  Activation ranges come from
running the float model over a calibration batch and recording the
pre-activation extrema of each requantized stage (conv outputs before
ReLU, and the logits).  Biases are stored as int32 codes at scale
s_in * s_w with zero point 0.

`reference_forward` then runs the quantized graph in pure integer numpy
arithmetic — accumulate sum((W - z_w) * (A - z_a)) + bias in int64,
requantize with code = clamp(rint(acc * M) + z_out, 0, 255) where
M = s_in * s_w / s_out in float64 (rint rounds half to even), ReLU and
max-pool on codes, argmax ties to the lowest index.  It shares no code
with any other implementation of the same pipeline; agreement is checked
through the serialized files alone.
"""

from __future__ import annotations

import numpy as np
import torch

from .data import INPUT_SCALE, INPUT_ZERO_POINT
from .model import DigitsCnn


def affine_range(values: np.ndarray) -> tuple[float, int]:
    """Scale and zero point covering [min(values), max(values)] plus 0."""
    lo = min(0.0, float(values.min()))
    hi = max(0.0, float(values.max()))
    if hi == lo:
        return 1.0, 0
    scale = (hi - lo) / 255.0
    zero_point = int(round(-lo / scale))
    return scale, min(255, max(0, zero_point))


def encode(values: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    """Affine-encode floats to uint8 codes."""
    codes = np.rint(values / scale) + zero_point
    return np.clip(codes, 0, 255).astype(np.uint8)


def _calibration_ranges(model: DigitsCnn, calib_x: np.ndarray) -> dict[str, tuple[float, int]]:
    """Pre-activation extrema of each requantized stage over the batch."""
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(calib_x)
        h1 = model.conv1(x)
        p1 = model.pool(torch.relu(h1))
        h2 = model.conv2(p1)
        p2 = model.pool(torch.relu(h2))
        logits = model.fc(torch.flatten(p2, 1))
    return {
        "conv1": affine_range(h1.numpy()),
        "conv2": affine_range(h2.numpy()),
        "fc": affine_range(logits.numpy()),
    }


def quantize_model(
    model: DigitsCnn, calib_x: np.ndarray
) -> tuple[dict, dict[str, np.ndarray]]:
    """Quantize a trained float model into (manifest, tensors).

    calib_x: (n, 1, 8, 8) float32 calibration inputs (training images).
    """
    ranges = _calibration_ranges(model, calib_x)
    tensors: dict[str, np.ndarray] = {}
    layers: list[dict] = []
    tensor_records: dict[str, dict] = {}
    in_scale = INPUT_SCALE

    stages = [
        ("conv1", model.conv1, "conv2d"),
        ("conv2", model.conv2, "conv2d"),
        ("fc", model.fc, "dense"),
    ]
    for name, module, kind in stages:
        weight = module.weight.detach().numpy()
        bias = module.bias.detach().numpy()
        w_scale, w_zp = affine_range(weight)
        out_scale, out_zp = ranges[name]
        tensors[f"{name}.weight"] = encode(weight, w_scale, w_zp)
        tensors[f"{name}.bias"] = np.rint(bias / (in_scale * w_scale)).astype(np.int32)
        tensor_records[f"{name}.weight"] = {"scale": w_scale, "zero_point": w_zp}
        tensor_records[f"{name}.bias"] = {"scale": in_scale * w_scale, "zero_point": 0}
        rec = {
            "type": kind,
            "name": name,
            "weight": f"{name}.weight",
            "bias": f"{name}.bias",
            "scale": out_scale,
            "zero_point": out_zp,
        }
        if kind == "conv2d":
            rec["stride"] = 1
            rec["padding"] = 1
            layers.extend(
                [rec, {"type": "relu"}, {"type": "maxpool2d", "kernel": 2}]
            )
        else:
            layers.append(rec)
        in_scale = out_scale  # ReLU and max-pool keep their input quantization

    layers.insert(6, {"type": "flatten"})  # between the second pool and fc
    layers.append({"type": "argmax"})

    manifest = {
        "input": {
            "scale": INPUT_SCALE,
            "zero_point": INPUT_ZERO_POINT,
            "shape": [1, 8, 8],
        },
        "layers": layers,
        "tensors": tensor_records,
        "metadata": {},
    }
    return manifest, tensors


# ---------------------------------------------------------------------------
# Integer reference inference (numpy only).
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, pad: int, pad_code: int) -> tuple[np.ndarray, int, int]:
    """(B, C, H, W) int64 codes -> (B, out_h*out_w, C*k*k) patches."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_code)
    b, c, h, w = x.shape
    out_h, out_w = h - k + 1, w - k + 1
    patches = np.empty((b, out_h * out_w, c * k * k), dtype=np.int64)
    for oy in range(out_h):
        for ox in range(out_w):
            window = x[:, :, oy : oy + k, ox : ox + k]
            patches[:, oy * out_w + ox, :] = window.reshape(b, -1)
    return patches, out_h, out_w


def _requantize(acc: np.ndarray, multiplier: float, out_zp: int) -> np.ndarray:
    return np.clip(np.rint(acc * multiplier) + out_zp, 0, 255).astype(np.int64)


def _matmul_stage(
    patches: np.ndarray,
    w_codes: np.ndarray,
    w_rec: dict,
    bias: np.ndarray,
    layer_rec: dict,
    in_scale: float,
    in_zp: int,
) -> tuple[np.ndarray, float, int]:
    """Shared accumulator path for conv (via im2col) and dense layers."""
    wmat = w_codes.reshape(w_codes.shape[0], -1).astype(np.int64)
    acc = (patches - in_zp) @ (wmat - int(w_rec["zero_point"])).T
    acc += bias.astype(np.int64)
    multiplier = in_scale * float(w_rec["scale"]) / float(layer_rec["scale"])
    out_zp = int(layer_rec["zero_point"])
    return _requantize(acc, multiplier, out_zp), float(layer_rec["scale"]), out_zp


def reference_forward(
    manifest: dict, tensors: dict[str, np.ndarray], image_codes: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Run the quantized graph on uint8 image codes.

    Returns (logit codes (B, n_classes) uint8, predictions (B,) uint8).
    """
    act = image_codes.astype(np.int64)
    scale = float(manifest["input"]["scale"])
    zp = int(manifest["input"]["zero_point"])
    logits: np.ndarray | None = None
    predictions: np.ndarray | None = None

    for rec in manifest["layers"]:
        kind = rec["type"]
        if kind == "conv2d":
            w = tensors[rec["weight"]]
            patches, out_h, out_w = _im2col(act, w.shape[2], int(rec["padding"]), zp)
            out, scale, zp = _matmul_stage(
                patches,
                w,
                manifest["tensors"][rec["weight"]],
                tensors[rec["bias"]],
                rec,
                scale,
                zp,
            )
            b = act.shape[0]
            act = out.transpose(0, 2, 1).reshape(b, w.shape[0], out_h, out_w)
        elif kind == "dense":
            w = tensors[rec["weight"]]
            act, scale, zp = _matmul_stage(
                act,
                w,
                manifest["tensors"][rec["weight"]],
                tensors[rec["bias"]],
                rec,
                scale,
                zp,
            )
        elif kind == "relu":
            act = np.maximum(act, zp)
        elif kind == "maxpool2d":
            k = int(rec["kernel"])
            b, c, h, w_ = act.shape
            act = act.reshape(b, c, h // k, k, w_ // k, k).max(axis=(3, 5))
        elif kind == "flatten":
            act = act.reshape(act.shape[0], -1)
        elif kind == "argmax":
            logits = act.astype(np.uint8)
            predictions = np.argmax(act, axis=1).astype(np.uint8)
        else:
            raise ValueError(f"reference cannot run layer type {kind!r}")

    if logits is None or predictions is None:
        raise ValueError("graph has no argmax layer")
    return logits, predictions
