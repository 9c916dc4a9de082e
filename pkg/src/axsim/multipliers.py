"""Bit-exact models of approximate unsigned 8x8 multipliers.

Three pruning families are modeled, each parameterized by an aggressiveness
level m:

* perforated: the m least-significant partial-product rows are never formed,
  so the full contribution of the multiplier's m low activation bits is lost.
* recursive: the multiplier is split into m-bit / (n-m)-bit halves and the
  low*low sub-product is pruned from the recursive decomposition.
* truncated: the m least-significant result columns are pruned, removing
  every partial-product bit that lands in those columns.

All three discard only non-negative contributions, so approximate products
never exceed the exact product, and every approximate product is a multiple
of 2**m (the low m result bits are structurally zero).  `multiply_approx`
builds products from their surviving partial-product terms while
`mult_error` evaluates the closed-form error expressions; the two are
written independently so tests can check one against the other over the
full 65 536-pair input space.

Scalar functions define the contract; the `*_array` variants are the
vectorized equivalents used by the statistics and inference layers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class MultKind(enum.Enum):
    EXACT = "exact"
    PERFORATED = "perforated"
    RECURSIVE = "recursive"
    TRUNCATED = "truncated"


# Aggressiveness bounds per kind, for n operand bits.  Recursive halves the
# operand, so m must stay below n; truncated prunes result columns, of which
# there are 2n-1 carrying partial-product bits.
def _max_m(kind: MultKind, n: int) -> int:
    if kind is MultKind.TRUNCATED:
        return 2 * n - 2
    return n - 1


@dataclass(frozen=True)
class AxMultConfig:
    """An approximate multiplier choice: kind plus aggressiveness m.

    n is the operand width in bits; the toolkit is exercised at n=8
    throughout, but the arithmetic is written against n.
    """

    kind: MultKind
    m: int = 0
    n: int = 8

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"operand width must be >= 1, got n={self.n}")
        if self.kind is MultKind.EXACT:
            if self.m != 0:
                raise ValueError("exact multiplier takes no m parameter")
            return
        if not 0 <= self.m <= _max_m(self.kind, self.n):
            raise ValueError(
                f"m={self.m} out of range for {self.kind.value} with n={self.n} "
                f"(0..{_max_m(self.kind, self.n)})"
            )

    @property
    def operand_max(self) -> int:
        return (1 << self.n) - 1

    @property
    def shift(self) -> int:
        """Guaranteed power-of-two factor of every product: m, 0 for exact."""
        return 0 if self.kind is MultKind.EXACT else self.m

    def describe(self) -> str:
        if self.kind is MultKind.EXACT:
            return "exact"
        return f"{self.kind.value} m={self.m}"


@dataclass(frozen=True)
class UProduct:
    """An unsigned product together with its structural power-of-two factor.

    value is the full product (already including the 2**shift factor);
    value % 2**shift == 0 always holds.
    """

    value: int
    shift: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("product value must be non-negative")
        if self.value % (1 << self.shift):
            raise ValueError(
                f"product {self.value} is not a multiple of 2**{self.shift}"
            )

    @property
    def significand(self) -> int:
        """The product with the structural zero bits stripped."""
        return self.value >> self.shift


def _check_operands(cfg: AxMultConfig, w: int, a: int) -> None:
    if not (0 <= w <= cfg.operand_max and 0 <= a <= cfg.operand_max):
        raise ValueError(
            f"operands ({w}, {a}) outside [0, {cfg.operand_max}] for n={cfg.n}"
        )


def multiply_exact(cfg: AxMultConfig, w: int, a: int) -> int:
    """Reference product w*a, with operand range validation."""
    _check_operands(cfg, w, a)
    return w * a


def multiply_approx(cfg: AxMultConfig, w: int, a: int) -> UProduct:
    """Approximate product, built from the surviving partial products.

    Each kind is evaluated from its defining hardware structure rather than
    from exact-minus-error, so the closed-form error expressions in
    `mult_error` are independently checkable.
    """
    _check_operands(cfg, w, a)
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        return UProduct(w * a, 0)
    if kind is MultKind.PERFORATED:
        # rows i >= m survive: sum_i w * a_i * 2^i
        value = 0
        for i in range(m, cfg.n):
            value += w * ((a >> i) & 1) << i
        return UProduct(value, m)
    if kind is MultKind.RECURSIVE:
        # halves: w = wh*2^m + wl, a = ah*2^m + al; the wl*al term is pruned
        wh, wl = w >> m, w & ((1 << m) - 1)
        ah, al = a >> m, a & ((1 << m) - 1)
        value = ((wh * ah << m) + wh * al + wl * ah) << m
        return UProduct(value, m)
    # truncated: partial-product bits w_j * a_i survive iff column i+j >= m
    value = 0
    for i in range(cfg.n):
        for j in range(max(m - i, 0), cfg.n):
            value += (((w >> j) & 1) * ((a >> i) & 1)) << (i + j)
    return UProduct(value, m)


def mult_error(cfg: AxMultConfig, w: int, a: int) -> int:
    """Closed-form error exact - approximate for a single pair."""
    _check_operands(cfg, w, a)
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        return 0
    mask = (1 << m) - 1
    if kind is MultKind.PERFORATED:
        return w * (a & mask)
    if kind is MultKind.RECURSIVE:
        return (w & mask) * (a & mask)
    # truncated: each pruned column i of the activation contributes the
    # residue of w modulo 2^(m-i), weighted by a's bit i
    total = 0
    for i in range(min(m, cfg.n)):
        total += (w & ((1 << (m - i)) - 1)) * ((a >> i) & 1) << i
    return total


def x_value(cfg: AxMultConfig, a: int) -> int:
    """Per-activation covariate driving the correction term.

    Perforated and recursive errors are proportional to the activation's
    m-bit residue; the truncated error is gated by whether any of the m low
    activation bits is set.
    """
    if cfg.kind is MultKind.EXACT:
        raise ValueError("exact multiplier has no correction covariate")
    if not 0 <= a <= cfg.operand_max:
        raise ValueError(f"activation {a} outside [0, {cfg.operand_max}]")
    residue = a & ((1 << cfg.m) - 1)
    if cfg.kind is MultKind.TRUNCATED:
        return int(residue != 0)
    return residue


# ---------------------------------------------------------------------------
# Vectorized equivalents.  Arrays are taken as unsigned integer codes and
# results are int64; shapes broadcast like the underlying numpy ops.
# ---------------------------------------------------------------------------


def _as_i64(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).astype(np.int64, copy=False)


def multiply_exact_array(cfg: AxMultConfig, w: np.ndarray, a: np.ndarray) -> np.ndarray:
    return _as_i64(w) * _as_i64(a)


def multiply_approx_array(cfg: AxMultConfig, w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Vectorized approximate product values (the UProduct.value field)."""
    w = _as_i64(w)
    a = _as_i64(a)
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        return w * a
    if kind is MultKind.PERFORATED:
        value = np.zeros(np.broadcast(w, a).shape, dtype=np.int64)
        for i in range(m, cfg.n):
            value += w * ((a >> i) & 1) << i
        return value
    if kind is MultKind.RECURSIVE:
        mask = (1 << m) - 1
        wh, wl = w >> m, w & mask
        ah, al = a >> m, a & mask
        return ((wh * ah << m) + wh * al + wl * ah) << m
    # truncated: for activation row i only the w bits with j >= m-i survive
    value = np.zeros(np.broadcast(w, a).shape, dtype=np.int64)
    for i in range(cfg.n):
        keep = max(m - i, 0)
        w_high = w & ~((1 << keep) - 1)
        value += w_high * ((a >> i) & 1) << i
    return value


def mult_error_array(cfg: AxMultConfig, w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Vectorized closed-form errors."""
    w = _as_i64(w)
    a = _as_i64(a)
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        return np.zeros(np.broadcast(w, a).shape, dtype=np.int64)
    mask = (1 << m) - 1
    if kind is MultKind.PERFORATED:
        return w * (a & mask)
    if kind is MultKind.RECURSIVE:
        return (w & mask) * (a & mask)
    total = np.zeros(np.broadcast(w, a).shape, dtype=np.int64)
    for i in range(min(m, cfg.n)):
        total += (w & ((1 << (m - i)) - 1)) * ((a >> i) & 1) << i
    return total


def x_value_array(cfg: AxMultConfig, a: np.ndarray) -> np.ndarray:
    if cfg.kind is MultKind.EXACT:
        raise ValueError("exact multiplier has no correction covariate")
    a = _as_i64(a)
    residue = a & ((1 << cfg.m) - 1)
    if cfg.kind is MultKind.TRUNCATED:
        return (residue != 0).astype(np.int64)
    return residue


def error_bound(cfg: AxMultConfig) -> int:
    """Largest possible single-product error for the configuration."""
    kind, m = cfg.kind, cfg.m
    if kind is MultKind.EXACT:
        return 0
    if kind is MultKind.PERFORATED:
        return cfg.operand_max * ((1 << m) - 1)
    if kind is MultKind.RECURSIVE:
        return ((1 << m) - 1) ** 2
    return m * (1 << m) - ((1 << m) - 1)
