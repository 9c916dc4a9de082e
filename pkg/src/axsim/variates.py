"""Control-variate correction for dot products over approximate multipliers.

A length-k dot product accumulated with an approximate multiplier picks up
the error sum of its k products.  That sum is strongly correlated with a
cheap per-activation covariate x (the activation's low-bit residue, or a
single gate bit for the truncated family), so adding back a correction term

    V = C * sum(x_j) + C0

with per-filter constants (C, C0) derived offline from the weights removes
the error mean and most of its variance at the cost of one extra multiply
per dot product.

Constants live in exact rational arithmetic during derivation and are then
quantized to a fixed-point representation: by default 8 fractional bits,
or, in "hardware-rounding" mode, an 8-bit-total encoding that mirrors the
hardware operand width of the correction multiplier (with a flag raised
when a value cannot be represented).  C ends up quantized for perforated
filters either way because its exact value there is rounded to an integer
by construction.

C0 is an integer and is meant to be folded into the filter bias offline;
`corrected_dot` applies it that way, and `control_variate` exposes the
same arithmetic for a single correction term.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .multipliers import (
    AxMultConfig,
    MultKind,
    multiply_approx,
    multiply_exact,
    x_value,
)
from .rounding import rhe_div_array, rhe_div_pow2, rhe_fraction

# Fractional bits of the default fixed-point representation of C.
C_FRAC_BITS = 8

# Total bits available to C on the correction multiplier's weight port.
C_HW_BITS = 8


@dataclass(frozen=True)
class Filter:
    """A dot-product operand set: uint8 weight codes plus an integer bias."""

    weights: tuple[int, ...]
    bias: int = 0

    def __post_init__(self) -> None:
        if len(self.weights) == 0:
            raise ValueError("filter needs at least one weight")
        if any(not 0 <= w <= 255 for w in self.weights):
            raise ValueError("weights must be uint8 codes in [0, 255]")
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))

    @property
    def k(self) -> int:
        return len(self.weights)


def w_hat(w: int, m: int) -> Fraction:
    """Expected single-product error of a truncated multiplier for weight w.

    Equals half the sum of w's residues modulo 2^(m-i) weighted by 2^i over
    the m pruned result columns; always a multiple of 1/2.
    """
    if not 0 <= w <= 255:
        raise ValueError(f"weight {w} outside [0, 255]")
    if m < 0:
        raise ValueError("m must be non-negative")
    total = 0
    for i in range(m):
        total += (w & ((1 << (m - i)) - 1)) << i
    return Fraction(total, 2)


@dataclass(frozen=True)
class FilterConstants:
    """Correction constants for one filter and one multiplier config.

    c_num / 2**c_frac_bits is the quantized C actually multiplied at
    runtime; c_real and c0_real keep the exact rational values for
    diagnostics and for unrounded statistical analysis.  w_hat_values is
    populated for the truncated family only.
    """

    kind: MultKind
    m: int
    c_num: int
    c_frac_bits: int
    c0: int
    c_real: Fraction
    c0_real: Fraction
    w_hat_values: tuple[Fraction, ...] | None = None
    c_width_exceeded: bool = False

    @property
    def c(self) -> Fraction:
        """Quantized C as an exact rational."""
        return Fraction(self.c_num, 1 << self.c_frac_bits)


def derive_constants(
    cfg: AxMultConfig, flt: Filter, hardware_rounding: bool = False
) -> FilterConstants:
    """Derive (C, C0) for one filter.

    C targets the mean weight-side factor of the error model (the weights
    themselves for perforated, their m-bit residues for recursive, their
    expected truncation errors for truncated) so that V = C*sum(x) + C0
    matches the error sum in expectation under uniform activations.
    """
    k = flt.k
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        zero = Fraction(0)
        return FilterConstants(kind, 0, 0, 0, 0, zero, zero)

    mask = (1 << m) - 1
    if kind is MultKind.PERFORATED:
        c_real = Fraction(sum(flt.weights), k)
        # C is an 8-bit integer in both modes: it rides along with the
        # uint8 weights, so it gets their width.
        return FilterConstants(
            kind, m, rhe_fraction(c_real), 0, 0, c_real, Fraction(0)
        )
    if kind is MultKind.RECURSIVE:
        c_real = Fraction(sum(w & mask for w in flt.weights), k)
        frac_bits = C_HW_BITS - m if hardware_rounding else C_FRAC_BITS
        c_num = rhe_fraction(c_real * (1 << frac_bits))
        return FilterConstants(kind, m, c_num, frac_bits, 0, c_real, Fraction(0))

    hats = tuple(w_hat(w, m) for w in flt.weights)
    total = sum(hats, Fraction(0))
    c_real = total / k
    c0_real = total / (1 << m)
    c0 = rhe_fraction(c0_real)
    if hardware_rounding:
        # The correction multiplier gives C eight integer bits here; the
        # mean truncation error can exceed that for aggressive m.
        c_num = rhe_fraction(c_real)
        exceeded = c_num > 255
        return FilterConstants(
            kind, m, c_num, 0, c0, c_real, c0_real, hats, exceeded
        )
    c_num = rhe_fraction(c_real * (1 << C_FRAC_BITS))
    return FilterConstants(kind, m, c_num, C_FRAC_BITS, c0, c_real, c0_real, hats)


def control_variate(consts: FilterConstants, sum_x: int) -> int:
    """Integer correction term V = round(C * sum_x) + C0, ties to even.

    The product is rounded before C0 is added, which makes folding C0 into
    the bias exactly equivalent to applying it here.
    """
    if sum_x < 0:
        raise ValueError("sum of covariates cannot be negative")
    return rhe_div_pow2(consts.c_num * sum_x, consts.c_frac_bits) + consts.c0


def corrected_dot(
    cfg: AxMultConfig,
    flt: Filter,
    activations: Sequence[int],
    consts: FilterConstants | None = None,
) -> int:
    """Dot product over the approximate multiplier plus its correction term.

    Returns bias + sum of approximate products + V.  With an exact config
    this degenerates to the plain dot product.  C0 is applied as a bias
    adjustment, matching how a deployed filter would carry it.
    """
    if len(activations) != flt.k:
        raise ValueError(
            f"activation count {len(activations)} != filter length {flt.k}"
        )
    if cfg.kind is MultKind.EXACT:
        acc = flt.bias
        for w, a in zip(flt.weights, activations):
            acc += multiply_exact(cfg, w, a)
        return acc
    if consts is None:
        consts = derive_constants(cfg, flt)
    acc = flt.bias + consts.c0
    sum_x = 0
    for w, a in zip(flt.weights, activations):
        acc += multiply_approx(cfg, w, a).value
        sum_x += x_value(cfg, a)
    return acc + rhe_div_pow2(consts.c_num * sum_x, consts.c_frac_bits)


def conv_error(
    cfg: AxMultConfig,
    flt: Filter,
    activations: Sequence[int],
    with_variate: bool = True,
    consts: FilterConstants | None = None,
) -> int:
    """Accumulator error (exact dot) - (approximate dot), signed.

    With the variate enabled this is exact minus `corrected_dot`; without
    it, the correction term and the C0 bias adjustment are both dropped,
    leaving the raw error sum of the approximate products.
    """
    exact_cfg = AxMultConfig(MultKind.EXACT, n=cfg.n)
    exact = corrected_dot(exact_cfg, flt, activations)
    if with_variate:
        return exact - corrected_dot(cfg, flt, activations, consts)
    approx = flt.bias
    for w, a in zip(flt.weights, activations):
        approx += multiply_approx(cfg, w, a).value
    return exact - approx


# ---------------------------------------------------------------------------
# Batch derivation for whole layers: one row of weight codes per filter.
# ---------------------------------------------------------------------------


def derive_constants_matrix(
    cfg: AxMultConfig, weights: np.ndarray, hardware_rounding: bool = False
) -> tuple[np.ndarray, np.ndarray, int, np.ndarray]:
    """Vectorized constants for a (filters, k) weight-code matrix.

    Returns (c_num, c0, c_frac_bits, c_width_exceeded) where the arrays
    are per-filter int64 / bool.  Matches derive_constants exactly.
    """
    w = np.asarray(weights).astype(np.int64, copy=False)
    if w.ndim != 2:
        raise ValueError("weights must be a (filters, k) matrix")
    n_filters, k = w.shape
    kind, m = cfg.kind, cfg.m
    exceeded = np.zeros(n_filters, dtype=bool)
    if kind is MultKind.EXACT:
        zeros = np.zeros(n_filters, dtype=np.int64)
        return zeros, zeros.copy(), 0, exceeded

    mask = (1 << m) - 1
    if kind is MultKind.PERFORATED:
        c_num = rhe_div_array(w.sum(axis=1), k)
        return c_num, np.zeros(n_filters, dtype=np.int64), 0, exceeded
    if kind is MultKind.RECURSIVE:
        frac_bits = C_HW_BITS - m if hardware_rounding else C_FRAC_BITS
        c_num = rhe_div_array((w & mask).sum(axis=1) << frac_bits, k)
        return c_num, np.zeros(n_filters, dtype=np.int64), frac_bits, exceeded

    # twice_hat holds 2*w_hat per weight, an exact integer
    twice_hat = np.zeros_like(w)
    for i in range(m):
        twice_hat += (w & ((1 << (m - i)) - 1)) << i
    totals = twice_hat.sum(axis=1)  # = 2 * sum(w_hat)
    c0 = rhe_div_array(totals, 1 << (m + 1))
    if hardware_rounding:
        c_num = rhe_div_array(totals, 2 * k)
        return c_num, c0, 0, c_num > 255
    c_num = rhe_div_array(totals << C_FRAC_BITS, 2 * k)
    return c_num, c0, C_FRAC_BITS, exceeded
