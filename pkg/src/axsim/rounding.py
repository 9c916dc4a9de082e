"""Round-half-to-even helpers for exact integer and fixed-point arithmetic.

Every rounding step in the toolkit (correction constants, control-variate
products, requantization) uses round-half-to-even so that independently
written paths agree bit for bit.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def rhe_div(num: int, den: int) -> int:
    """Round num/den to the nearest integer, ties to even. den must be > 0."""
    if den <= 0:
        raise ValueError(f"denominator must be positive, got {den}")
    q, r = divmod(num, den)  # floor division keeps 0 <= r < den for any sign
    twice = 2 * r
    if twice > den or (twice == den and q % 2 == 1):
        q += 1
    return q


def rhe_div_pow2(num: int, bits: int) -> int:
    """Round num / 2**bits to the nearest integer, ties to even."""
    if bits == 0:
        return num
    return rhe_div(num, 1 << bits)


def rhe_div_pow2_array(num: np.ndarray, bits: int) -> np.ndarray:
    """Vectorized rhe_div_pow2 for int64 arrays.

    Arithmetic right shift is floor division and the masked remainder is
    always in [0, 2**bits), so the bump test matches rhe_div for negative
    values too.
    """
    if bits == 0:
        return num.astype(np.int64, copy=True)
    num = num.astype(np.int64, copy=False)
    q = num >> bits
    r = num & ((1 << bits) - 1)
    half = 1 << (bits - 1)
    bump = (r > half) | ((r == half) & ((q & 1) == 1))
    return q + bump


def rhe_div_array(num: np.ndarray, den: int) -> np.ndarray:
    """Vectorized rhe_div with a shared positive divisor."""
    if den <= 0:
        raise ValueError(f"denominator must be positive, got {den}")
    num = np.asarray(num).astype(np.int64, copy=False)
    q, r = np.divmod(num, den)  # floor semantics, 0 <= r < den
    twice = 2 * r
    bump = (twice > den) | ((twice == den) & ((q & 1) == 1))
    return q + bump


def rhe_fraction(x: Fraction) -> int:
    """Round an exact rational to the nearest integer, ties to even."""
    # Python's round() on Fraction already implements banker's rounding.
    return round(x)
