"""Quantized CNN inference over exact or approximate multipliers.

Tensors use per-tensor asymmetric affine uint8 quantization:
value = scale * (code - zero_point).  Convolutions are lowered to per-pixel
dot products (im2col), so each output accumulator is

    acc = sum_j (W_j - z_w) * (A_j - z_a) + bias
        = sum_j W_j*A_j - z_w*sum_j A_j - z_a*sum_j W_j + k*z_a*z_w + bias

with all quantities in integer code space and bias already scaled to
s_in * s_w.  Only the code-by-code product sum_j W_j*A_j runs on the
approximate multiplier; the zero-point cross terms are cheap exact sums
and are never approximated.  The control-variate correction adds
round(C * sum_j x_j) per accumulator with C0 folded into the bias,
matching `variates.corrected_dot` exactly (cross-checked in tests).

Accumulators requantize to the next layer's uint8 codes as
code = clamp(rint(acc * M) + z_out, 0, 255) with M = s_in * s_w / s_out
evaluated in float64 and rint rounding half to even.  ReLU and the pools
operate directly on codes and keep their input quantization; argmax ties
resolve to the lowest class index.

Everything is deterministic: integer arithmetic throughout, with matrix
products run in float64 only where every partial sum is an integer below
2^53 (hence exact).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .modelfile import ModelFormatError, read_model_container
from .multipliers import AxMultConfig, MultKind
from .rounding import rhe_div_array, rhe_div_pow2_array
from .variates import derive_constants_matrix


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0 <= self.zero_point <= 255:
            raise ValueError(f"zero_point {self.zero_point} outside [0, 255]")


@dataclass(frozen=True)
class QuantizedTensor:
    """Raw integer codes plus the affine mapping back to real values."""

    codes: np.ndarray
    scale: float
    zero_point: int

    def dequantize(self) -> np.ndarray:
        return self.scale * (self.codes.astype(np.float64) - self.zero_point)


@dataclass(frozen=True)
class Conv2dLayer:
    name: str
    weight: QuantizedTensor  # (filters, in_ch, kh, kw) uint8 codes
    bias: np.ndarray  # (filters,) int32, scale = in_scale * w_scale
    stride: int
    padding: int
    out: QuantParams


@dataclass(frozen=True)
class DenseLayer:
    name: str
    weight: QuantizedTensor  # (units, in_features) uint8 codes
    bias: np.ndarray
    out: QuantParams


@dataclass(frozen=True)
class ReluLayer:
    pass


@dataclass(frozen=True)
class MaxPool2dLayer:
    kernel: int


@dataclass(frozen=True)
class AvgPool2dLayer:
    kernel: int


@dataclass(frozen=True)
class FlattenLayer:
    pass


@dataclass(frozen=True)
class ArgmaxLayer:
    pass


Layer = (
    Conv2dLayer
    | DenseLayer
    | ReluLayer
    | MaxPool2dLayer
    | AvgPool2dLayer
    | FlattenLayer
    | ArgmaxLayer
)


@dataclass(frozen=True)
class QuantizedModel:
    input_shape: tuple[int, int, int]  # (channels, height, width)
    input_q: QuantParams
    layers: tuple[Layer, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def reference_accuracy(self) -> float | None:
        return self.metadata.get("reference_accuracy")


def load_model(path) -> QuantizedModel:
    """Read a model container and build the layer graph."""
    manifest, tensors = read_model_container(path)

    def tensor(name: str, layer: str) -> np.ndarray:
        if name not in tensors:
            raise ModelFormatError(f"layer {layer!r} references missing tensor {name!r}")
        return tensors[name]

    def qparams(rec: dict, what: str) -> QuantParams:
        try:
            return QuantParams(float(rec["scale"]), int(rec["zero_point"]))
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"bad quantization for {what}: {exc}") from None

    inp = manifest.get("input")
    if not inp:
        raise ModelFormatError("manifest has no input record")
    input_q = qparams(inp, "input")
    input_shape = tuple(inp["shape"])
    if len(input_shape) != 3:
        raise ModelFormatError(f"input shape {input_shape} must be (C, H, W)")

    layers: list[Layer] = []
    for idx, rec in enumerate(manifest.get("layers", [])):
        kind = rec.get("type")
        label = rec.get("name", f"layer{idx}")
        if kind == "conv2d" or kind == "dense":
            w_rec = manifest["tensors"][rec["weight"]]
            w = QuantizedTensor(
                tensor(rec["weight"], label),
                float(w_rec["scale"]),
                int(w_rec["zero_point"]),
            )
            bias = tensor(rec["bias"], label)
            out = qparams(rec, label)
            if kind == "conv2d":
                if w.codes.ndim != 4:
                    raise ModelFormatError(f"conv weight for {label!r} must be 4-D")
                layers.append(
                    Conv2dLayer(
                        label,
                        w,
                        bias,
                        int(rec.get("stride", 1)),
                        int(rec.get("padding", 0)),
                        out,
                    )
                )
            else:
                if w.codes.ndim != 2:
                    raise ModelFormatError(f"dense weight for {label!r} must be 2-D")
                layers.append(DenseLayer(label, w, bias, out))
        elif kind == "relu":
            layers.append(ReluLayer())
        elif kind == "maxpool2d":
            layers.append(MaxPool2dLayer(int(rec.get("kernel", 2))))
        elif kind == "avgpool2d":
            layers.append(AvgPool2dLayer(int(rec.get("kernel", 2))))
        elif kind == "flatten":
            layers.append(FlattenLayer())
        elif kind == "argmax":
            layers.append(ArgmaxLayer())
        else:
            raise ModelFormatError(f"unknown layer type {kind!r} at index {idx}")
    return QuantizedModel(input_shape, input_q, tuple(layers), manifest.get("metadata", {}))


# ---------------------------------------------------------------------------
# Engine.
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int, pad_code: int):
    """(B, C, H, W) codes -> (B, P, C*kh*kw) patches, padding with pad_code."""
    if pad:
        x = np.pad(
            x,
            ((0, 0), (0, 0), (pad, pad), (pad, pad)),
            constant_values=pad_code,
        )
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[
                :, :, i : i + oh * stride : stride, j : j + ow * stride : stride
            ]
    # patch layout (c, kh, kw), matching a row-major flattened filter
    return cols.reshape(b, c * kh * kw, oh * ow).transpose(0, 2, 1), oh, ow


def _exact_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer matrix product via float64; exact while sums stay below 2^53."""
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


def _error_matmul(cfg: AxMultConfig, patches: np.ndarray, wmat: np.ndarray) -> np.ndarray:
    """Sum of per-product closed-form errors for every (patch, filter) pair."""
    m = cfg.m
    mask = (1 << m) - 1
    if cfg.kind is MultKind.PERFORATED:
        return _exact_matmul(patches & mask, wmat.T)
    if cfg.kind is MultKind.RECURSIVE:
        return _exact_matmul(patches & mask, (wmat & mask).T)
    if cfg.kind is MultKind.TRUNCATED:
        total = np.zeros((patches.shape[0], wmat.shape[0]), dtype=np.int64)
        for i in range(min(m, cfg.n)):
            w_mod = wmat & ((1 << (m - i)) - 1)
            total += _exact_matmul((patches >> i) & 1, w_mod.T) << i
        return total
    return np.zeros((patches.shape[0], wmat.shape[0]), dtype=np.int64)


def _sum_x(cfg: AxMultConfig, patches: np.ndarray) -> np.ndarray:
    mask = (1 << cfg.m) - 1
    if cfg.kind is MultKind.TRUNCATED:
        return np.count_nonzero(patches & mask, axis=1).astype(np.int64)
    return (patches & mask).sum(axis=1, dtype=np.int64)


def _dot_accumulators(
    patches: np.ndarray,
    wmat: np.ndarray,
    biases: np.ndarray,
    in_zp: int,
    w_zp: int,
    cfg: AxMultConfig,
    with_variate: bool,
    hardware_rounding: bool,
) -> np.ndarray:
    """Accumulators for every (patch, filter) pair, in bias units.

    patches: (P, k) uint8-valued codes; wmat: (F, k) codes.  The code
    product runs on the configured multiplier (plus correction if enabled);
    zero-point cross terms and bias are exact.
    """
    patches = patches.astype(np.int64, copy=False)
    wmat = wmat.astype(np.int64, copy=False)
    k = wmat.shape[1]
    code_product = _exact_matmul(patches, wmat.T)
    if cfg.kind is not MultKind.EXACT:
        code_product -= _error_matmul(cfg, patches, wmat)
        if with_variate:
            c_num, c0, frac_bits, _ = derive_constants_matrix(
                cfg, wmat, hardware_rounding
            )
            sum_x = _sum_x(cfg, patches)
            code_product += rhe_div_pow2_array(sum_x[:, None] * c_num[None, :], frac_bits)
            code_product += c0[None, :]
    sum_a = patches.sum(axis=1, dtype=np.int64)
    sum_w = wmat.sum(axis=1, dtype=np.int64)
    return (
        code_product
        - w_zp * sum_a[:, None]
        - in_zp * sum_w[None, :]
        + k * in_zp * w_zp
        + biases.astype(np.int64)[None, :]
    )


def _requantize(acc: np.ndarray, multiplier: float, out_zp: int) -> np.ndarray:
    scaled = np.rint(acc.astype(np.float64) * multiplier).astype(np.int64) + out_zp
    return np.clip(scaled, 0, 255).astype(np.uint8)


def apply_conv2d(
    layer: Conv2dLayer,
    x: np.ndarray,
    in_q: QuantParams,
    cfg: AxMultConfig,
    with_variate: bool = True,
    hardware_rounding: bool = False,
) -> np.ndarray:
    """Run one conv layer on (B, C, H, W) codes, returning output codes."""
    f, c, kh, kw = layer.weight.codes.shape
    if x.shape[1] != c:
        raise ValueError(f"layer {layer.name}: input has {x.shape[1]} channels, weights expect {c}")
    patches, oh, ow = _im2col(x, kh, kw, layer.stride, layer.padding, in_q.zero_point)
    b = patches.shape[0]
    wmat = layer.weight.codes.reshape(f, c * kh * kw)
    acc = _dot_accumulators(
        patches.reshape(b * oh * ow, -1),
        wmat,
        layer.bias,
        in_q.zero_point,
        layer.weight.zero_point,
        cfg,
        with_variate,
        hardware_rounding,
    )
    multiplier = in_q.scale * layer.weight.scale / layer.out.scale
    out = _requantize(acc, multiplier, layer.out.zero_point)
    return out.reshape(b, oh * ow, f).transpose(0, 2, 1).reshape(b, f, oh, ow)


def apply_dense(
    layer: DenseLayer,
    x: np.ndarray,
    in_q: QuantParams,
    cfg: AxMultConfig,
    with_variate: bool = True,
    hardware_rounding: bool = False,
) -> np.ndarray:
    """Run one dense layer on (B, features) codes, returning output codes."""
    acc = _dot_accumulators(
        x,
        layer.weight.codes,
        layer.bias,
        in_q.zero_point,
        layer.weight.zero_point,
        cfg,
        with_variate,
        hardware_rounding,
    )
    multiplier = in_q.scale * layer.weight.scale / layer.out.scale
    return _requantize(acc, multiplier, layer.out.zero_point)


def _pool_blocks(x: np.ndarray, kernel: int) -> np.ndarray:
    b, c, h, w = x.shape
    if h % kernel or w % kernel:
        raise ValueError(f"pool kernel {kernel} does not divide {h}x{w}")
    return x.reshape(b, c, h // kernel, kernel, w // kernel, kernel)


def apply_layer(
    layer: Layer,
    x: np.ndarray,
    in_q: QuantParams,
    cfg: AxMultConfig,
    with_variate: bool = True,
    hardware_rounding: bool = False,
) -> tuple[np.ndarray, QuantParams]:
    """Apply any layer; returns (codes, quantization of those codes)."""
    if isinstance(layer, Conv2dLayer):
        return apply_conv2d(layer, x, in_q, cfg, with_variate, hardware_rounding), layer.out
    if isinstance(layer, DenseLayer):
        return apply_dense(layer, x, in_q, cfg, with_variate, hardware_rounding), layer.out
    if isinstance(layer, ReluLayer):
        # zero in real values is the zero_point in code space
        return np.maximum(x, np.uint8(in_q.zero_point)), in_q
    if isinstance(layer, MaxPool2dLayer):
        return _pool_blocks(x, layer.kernel).max(axis=(3, 5)), in_q
    if isinstance(layer, AvgPool2dLayer):
        sums = _pool_blocks(x, layer.kernel).sum(axis=(3, 5), dtype=np.int64)
        mean = rhe_div_array(sums, layer.kernel * layer.kernel)
        return mean.astype(np.uint8), in_q
    if isinstance(layer, FlattenLayer):
        return x.reshape(x.shape[0], -1), in_q
    if isinstance(layer, ArgmaxLayer):
        raise ValueError("argmax is terminal; use forward()/evaluate()")
    raise TypeError(f"unknown layer {layer!r}")


@dataclass
class ForwardResult:
    logits: np.ndarray  # final pre-argmax codes, (B, classes)
    predictions: np.ndarray  # (B,) class indices, ties to the lowest index
    activations: list[tuple[np.ndarray, QuantParams]]  # per layer, argmax excluded


def forward(
    model: QuantizedModel,
    images: np.ndarray,
    cfg: AxMultConfig,
    with_variate: bool = True,
    hardware_rounding: bool = False,
    keep_activations: bool = False,
) -> ForwardResult:
    """Run the full network on (B, C, H, W) uint8 input codes."""
    if images.ndim != 4 or tuple(images.shape[1:]) != model.input_shape:
        raise ValueError(
            f"input shape {images.shape} does not match model {model.input_shape}"
        )
    x = images
    q = model.input_q
    acts: list[tuple[np.ndarray, QuantParams]] = []
    for layer in model.layers:
        if isinstance(layer, ArgmaxLayer):
            break
        x, q = apply_layer(layer, x, q, cfg, with_variate, hardware_rounding)
        if keep_activations:
            acts.append((x, q))
    logits = x
    if logits.ndim != 2:
        raise ValueError("network must end in a (B, classes) tensor before argmax")
    return ForwardResult(logits, np.argmax(logits, axis=1), acts)


@dataclass
class EvalReport:
    accuracy: float
    n_images: int
    config: str
    with_variate: bool
    per_layer_mse: list[float]  # dequantized MSE against the exact path
    predictions: np.ndarray


def evaluate(
    model: QuantizedModel,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: AxMultConfig,
    with_variate: bool = True,
    hardware_rounding: bool = False,
) -> EvalReport:
    """Accuracy plus per-layer divergence from the exact quantized path."""
    exact_cfg = AxMultConfig(MultKind.EXACT, n=cfg.n)
    res = forward(model, images, cfg, with_variate, hardware_rounding, keep_activations=True)
    mse: list[float] = []
    if cfg.kind is MultKind.EXACT:
        mse = [0.0 for _ in res.activations]
    else:
        ref = forward(model, images, exact_cfg, keep_activations=True)
        for (got, q), (want, _) in zip(res.activations, ref.activations):
            diff = got.astype(np.float64) - want.astype(np.float64)
            mse.append(float(np.mean(diff * diff)) * q.scale * q.scale)
    accuracy = float(np.mean(res.predictions == labels))
    return EvalReport(
        accuracy,
        int(images.shape[0]),
        cfg.describe(),
        with_variate,
        mse,
        res.predictions,
    )


def isolated_layer_mse(
    model: QuantizedModel,
    images: np.ndarray,
    cfg: AxMultConfig,
    with_variate: bool,
    hardware_rounding: bool = False,
) -> list[tuple[str, float]]:
    """Per-layer MSE with each conv/dense layer fed its exact-path input.

    Isolating layers keeps the comparison clean: upstream approximation
    error never contaminates a downstream layer's figure.
    """
    exact_cfg = AxMultConfig(MultKind.EXACT, n=cfg.n)
    ref = forward(model, images, exact_cfg, keep_activations=True)
    out: list[tuple[str, float]] = []
    x, q = images, model.input_q
    for layer, (want, want_q) in zip(model.layers, ref.activations):
        if isinstance(layer, (Conv2dLayer, DenseLayer)):
            got, _ = apply_layer(layer, x, q, cfg, with_variate, hardware_rounding)
            diff = got.astype(np.float64) - want.astype(np.float64)
            out.append(
                (layer.name, float(np.mean(diff * diff)) * want_q.scale**2)
            )
        x, q = want, want_q
    return out
