"""Width-faithful model of a systolic MAC array with a correction column.

The array is size x size, weight-stationary, one filter per row.  An
activation vector enters the columns in sequence; each cell adds its
approximate partial product to the row's running sum.  Because every
approximate product is a multiple of 2^m, the row adders operate on
products with the m structural zero bits stripped, which is what lets the
approximate array use adders m bits narrower than the exact one.  An extra
correction column closes each row: it multiplies the accumulated covariate
sum by the row's constant C and adds the result to the re-concatenated row
sum, costing one extra pipeline stage (two if the correction column is
itself pipelined).

Accumulator widths are derived from worst-case value capacity
(bit_length of the largest representable sum).  Exceeding a declared
width raises SimulatorFault rather than wrapping: the model reports
impossible hardware states instead of silently mis-simulating them.

Biases wider than 8 bits (as produced by quantized networks) take part in
the dataflow only through their low byte, exactly as an 8-bit bias would;
the remaining high part is added in the output stage.  For 8-bit biases
the model is bit-identical to the narrow datapath.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .multipliers import (
    AxMultConfig,
    MultKind,
    multiply_approx,
    multiply_approx_array,
    x_value,
    x_value_array,
)
from .rounding import rhe_div_pow2, rhe_div_pow2_array
from .variates import FilterConstants, derive_constants_matrix

SUPPORTED_SIZES = (16, 32, 48, 64)


class SimulatorFault(RuntimeError):
    """An accumulator or operand exceeded its declared hardware width."""


def _capacity_bits(max_value: int) -> int:
    """Bits needed to hold max_value: bit_length, i.e. ceil(log2(v + 1))."""
    return int(max_value).bit_length()


@dataclass(frozen=True)
class MacArrayConfig:
    """Array dimension plus multiplier choice; widths are derived.

    mac_plus_stages models the pipeline depth of the correction column
    (1 by default, 2 if its multiply and add are separate stages).
    """

    size: int
    mult: AxMultConfig
    mac_plus_stages: int = 1
    hardware_rounding: bool = False

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"array size must be >= 1, got {self.size}")
        if self.mac_plus_stages not in (1, 2):
            raise ValueError("mac_plus_stages must be 1 or 2")

    @property
    def width_main_adder(self) -> int:
        """Row accumulator width of the exact array."""
        prod_max = (1 << (2 * self.mult.n)) - 1
        return _capacity_bits(self.size * prod_max)

    @property
    def width_star_adder(self) -> int:
        """Row accumulator width with m structural zero bits stripped."""
        return self.width_main_adder - self.mult.shift

    @property
    def x_elem_max(self) -> int:
        if self.mult.kind is MultKind.TRUNCATED:
            return 1 if self.mult.m > 0 else 0
        return (1 << self.mult.m) - 1

    @property
    def width_sumx_adder(self) -> int:
        """Covariate accumulator width (0 when no covariate can be set)."""
        return _capacity_bits(self.size * self.x_elem_max)

    @property
    def width_plus_mult(self) -> tuple[int, int]:
        """Operand widths (covariate sum, C) of the correction multiplier."""
        return (self.width_sumx_adder, 8)

    @property
    def is_exact(self) -> bool:
        return self.mult.kind is MultKind.EXACT


@dataclass(frozen=True)
class RowState:
    """One row's registers mid-pass: stripped sum, covariate sum, column."""

    sum: int = 0
    sum_x: int = 0
    h: int = 0


def _check_sum(cfg: MacArrayConfig, value: int, row: int, col: int) -> None:
    width = cfg.width_main_adder if cfg.is_exact else cfg.width_star_adder
    if value >> width:
        raise SimulatorFault(
            f"row sum {value} exceeds {width}-bit adder at row {row}, column {col}"
        )


def _check_sumx(cfg: MacArrayConfig, value: int, row: int, col: int) -> None:
    if value >> cfg.width_sumx_adder:
        raise SimulatorFault(
            f"covariate sum {value} exceeds {cfg.width_sumx_adder}-bit adder "
            f"at row {row}, column {col}"
        )


def initial_state(cfg: MacArrayConfig, bias: int) -> RowState:
    """Seed a row with the in-datapath part of the bias.

    The low byte's bits above m preload the stripped accumulator; the m
    lowest bits rejoin at the output. For the exact array the full low
    byte preloads the accumulator.
    """
    low_byte = bias % 256
    if cfg.is_exact:
        return RowState(sum=low_byte)
    return RowState(sum=low_byte >> cfg.mult.m)


def mac_star_step(
    cfg: MacArrayConfig, w: int, a: int, state: RowState, row: int = 0
) -> RowState:
    """Advance one row past one column: accumulate product and covariate."""
    if state.h >= cfg.size:
        raise ValueError(f"row already consumed {cfg.size} columns")
    if cfg.is_exact:
        new_sum = state.sum + w * a
        _check_sum(cfg, new_sum, row, state.h)
        return RowState(new_sum, 0, state.h + 1)
    product = multiply_approx(cfg.mult, w, a)
    new_sum = state.sum + product.significand
    new_x = state.sum_x + x_value(cfg.mult, a)
    _check_sum(cfg, new_sum, row, state.h)
    _check_sumx(cfg, new_x, row, state.h)
    return RowState(new_sum, new_x, state.h + 1)


def mac_plus(
    cfg: MacArrayConfig, consts: FilterConstants, state: RowState, bias_low: int
) -> int:
    """Correction column: re-concatenate the bias low bits and add C*sumX."""
    m = cfg.mult.m
    if not 0 <= bias_low < max(1 << m, 1):
        raise ValueError(f"bias_low {bias_low} does not fit {m} bits")
    if cfg.hardware_rounding and consts.c_width_exceeded:
        raise SimulatorFault(
            f"constant C={consts.c_num} does not fit the 8-bit correction "
            f"multiplier operand"
        )
    v = rhe_div_pow2(consts.c_num * state.sum_x, consts.c_frac_bits)
    return ((state.sum << m) | bias_low) + v


def _as_matrix(stream) -> np.ndarray:
    acts = np.asarray(stream)
    if acts.ndim == 1:
        acts = acts[None, :]
    if acts.ndim != 2:
        raise ValueError("activation stream must be a vector or a matrix")
    return acts.astype(np.int64, copy=False)


def _pass(
    cfg: MacArrayConfig,
    weights: np.ndarray,
    acts: np.ndarray,
    sums0: np.ndarray,
    trace: TextIO | None = None,
    fault_xor: tuple[int, int, int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Push one activation vector per tile through the columns.

    weights: (tiles, rows, k); acts: (tiles, k); sums0: (tiles, rows).
    Returns final (sums, sum_x) in the stripped domain.  fault_xor
    (tile, row, col, bits) corrupts one product, for checker self-tests.
    """
    n_tiles, n_rows, k = weights.shape
    mult = cfg.mult
    sums = sums0.astype(np.int64, copy=True)
    sum_x = np.zeros(n_tiles, dtype=np.int64)
    sum_limit = 1 << (cfg.width_main_adder if cfg.is_exact else cfg.width_star_adder)
    x_limit = 1 << cfg.width_sumx_adder
    for h in range(k):
        w_col = weights[:, :, h]
        a_col = acts[:, h]
        products = multiply_approx_array(mult, w_col, a_col[:, None])
        if fault_xor is not None and fault_xor[2] == h:
            t, r, _, bits = fault_xor
            products[t, r] ^= bits
        sums += products >> mult.shift
        if not cfg.is_exact:
            sum_x += x_value_array(mult, a_col)
        if int(sums.max()) >= sum_limit:
            t, r = np.argwhere(sums >= sum_limit)[0]
            raise SimulatorFault(
                f"row sum {int(sums[t, r])} exceeds "
                f"{sum_limit.bit_length() - 1}-bit adder at row {int(r)}, column {h}"
            )
        if not cfg.is_exact and int(sum_x.max()) >= x_limit:
            t = int(np.argmax(sum_x))
            raise SimulatorFault(
                f"covariate sum {int(sum_x[t])} exceeds "
                f"{cfg.width_sumx_adder}-bit adder at column {h}"
            )
        if trace is not None:
            for t in range(n_tiles):
                for r in range(n_rows):
                    trace.write(f"{r},{h},{int(sums[t, r])},{int(sum_x[t])}\n")
    return sums, sum_x


class _PrefixWriter:
    """Prepends a fixed field (the stream-vector index) to trace lines."""

    def __init__(self, target: TextIO, prefix: str) -> None:
        self.target = target
        self.prefix = prefix

    def write(self, line: str) -> None:
        self.target.write(self.prefix + line)


def run_tile(
    cfg: MacArrayConfig,
    weight_tile,
    activation_stream,
    biases,
    consts_per_row: Sequence[FilterConstants] | None = None,
    trace: TextIO | None = None,
) -> tuple[np.ndarray, int]:
    """Stream activation vectors through one weight tile.

    weight_tile is (rows, k) with rows <= size and k <= size; the stream is
    one length-k vector or an (n_vectors, k) matrix.  Output is int64 of
    shape (rows,) or (rows, n_vectors) matching corrected_dot row by row
    (or the plain dot for an exact config), plus the pass's cycle count:
    pipeline fill plus one result per cycle, plus the correction column's
    extra stage(s) for approximate configs.
    """
    weights = np.asarray(weight_tile, dtype=np.int64)
    if weights.ndim != 2:
        raise ValueError("weight tile must be 2-D")
    n_rows, k = weights.shape
    if n_rows > cfg.size or k > cfg.size:
        raise ValueError(
            f"tile {n_rows}x{k} exceeds array size {cfg.size}x{cfg.size}"
        )
    acts = _as_matrix(activation_stream)
    if acts.shape[1] != k:
        raise ValueError(f"activation vectors must have length {k}")
    biases = np.asarray(biases, dtype=np.int64)
    if biases.shape != (n_rows,):
        raise ValueError(f"need one bias per row, got shape {biases.shape}")

    if cfg.is_exact:
        eff_bias = biases
        c_num = np.zeros(n_rows, dtype=np.int64)
        frac_bits = 0
    else:
        if consts_per_row is None or len(consts_per_row) != n_rows:
            raise ValueError("approximate configs need constants for every row")
        for consts in consts_per_row:
            if (consts.kind, consts.m) != (cfg.mult.kind, cfg.mult.m):
                raise ValueError("row constants do not match the multiplier config")
            if cfg.hardware_rounding and consts.c_width_exceeded:
                raise SimulatorFault(
                    f"constant C={consts.c_num} does not fit the 8-bit "
                    f"correction multiplier operand"
                )
        eff_bias = biases + np.asarray([c.c0 for c in consts_per_row], dtype=np.int64)
        c_num = np.asarray([c.c_num for c in consts_per_row], dtype=np.int64)
        frac_bits = consts_per_row[0].c_frac_bits

    m = cfg.mult.shift
    low_byte = eff_bias % 256
    high_rest = eff_bias - low_byte
    bias_low = low_byte & ((1 << m) - 1)
    sums0 = np.broadcast_to(low_byte >> m, (1, n_rows))

    n_vectors = acts.shape[0]
    if trace is not None:
        trace.write("vector,row,col,sum,sum_x\n")
    outputs = np.empty((n_rows, n_vectors), dtype=np.int64)
    for v in range(n_vectors):
        vec_trace = _PrefixWriter(trace, f"{v},") if trace is not None else None
        sums, sum_x = _pass(cfg, weights[None, :, :], acts[v : v + 1], sums0, vec_trace)
        if cfg.is_exact:
            outputs[:, v] = sums[0] + high_rest
        else:
            corr = rhe_div_pow2_array(c_num * sum_x[0], frac_bits)
            outputs[:, v] = ((sums[0] << m) | bias_low) + corr + high_rest

    cycles = cfg.size + n_vectors - 1
    if not cfg.is_exact:
        cycles += cfg.mac_plus_stages
    result = outputs[:, 0] if np.asarray(activation_stream).ndim == 1 else outputs
    return result, cycles


@dataclass
class EquivalenceReport:
    """Outcome of a batched run_tile-vs-corrected_dot comparison."""

    size: int
    mult: AxMultConfig
    n_tiles: int
    seed: int
    mismatches: list[tuple[int, int, int, int]]
    cycles: int
    cycles_exact: int

    @property
    def passed(self) -> bool:
        return not self.mismatches

    @property
    def latency_overhead(self) -> int:
        return self.cycles - self.cycles_exact


def equivalence_check(
    cfg: MacArrayConfig,
    n_tiles: int,
    seed: int,
    tiles_per_batch: int = 512,
    fault_xor: tuple[int, int, int, int] | None = None,
    rows_per_tile: int | None = None,
) -> EquivalenceReport:
    """Drive random full-width tiles through the array and cross-check.

    Each tile gets uint8 weights and biases and one uniform activation
    vector.  The pipeline result is compared against the direct
    dot-plus-correction computed from the same constants; any disagreement
    is recorded as (tile, row, got, expected).  fault_xor deliberately
    corrupts one product so the comparison itself can be validated.
    """
    if cfg.mult.kind is MultKind.EXACT:
        raise ValueError("equivalence_check compares approximate against exact")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_rows = rows_per_tile or cfg.size
    k = cfg.size
    mult = cfg.mult
    m = mult.m
    mismatches: list[tuple[int, int, int, int]] = []
    done = 0
    while done < n_tiles:
        batch = min(tiles_per_batch, n_tiles - done)
        weights = rng.integers(0, 256, size=(batch, n_rows, k), dtype=np.uint8)
        acts = rng.integers(0, 256, size=(batch, k), dtype=np.uint8).astype(np.int64)
        biases = rng.integers(0, 256, size=(batch, n_rows), dtype=np.uint8).astype(np.int64)
        w64 = weights.astype(np.int64)

        # constants for every row of every tile, derived as one matrix
        c_num, c0, frac_bits, exceeded = derive_constants_matrix(
            mult, w64.reshape(batch * n_rows, k), cfg.hardware_rounding
        )
        if cfg.hardware_rounding and bool(exceeded.any()):
            raise SimulatorFault(
                "constant C does not fit the 8-bit correction multiplier operand"
            )
        c_num = c_num.reshape(batch, n_rows)
        c0 = c0.reshape(batch, n_rows)

        eff_bias = biases + c0
        low_byte = eff_bias % 256
        bias_low = low_byte & ((1 << m) - 1)
        high_rest = eff_bias - low_byte

        batch_fault = None
        if fault_xor is not None and done <= fault_xor[0] < done + batch:
            t, r, h, bits = fault_xor
            batch_fault = (t - done, r, h, bits)
        sums, sum_x = _pass(cfg, w64, acts, low_byte >> m, fault_xor=batch_fault)
        corr = rhe_div_pow2_array(c_num * sum_x[:, None], frac_bits)
        got = ((sums << m) | bias_low) + corr + high_rest

        # direct reference: bias + c0 + approximate dot + rounded C*sum(x)
        prod = multiply_approx_array(mult, w64, acts[:, None, :]).sum(axis=2)
        x_direct = x_value_array(mult, acts).sum(axis=1)
        v_direct = rhe_div_pow2_array(c_num * x_direct[:, None], frac_bits)
        expected = biases + c0 + prod + v_direct

        bad = np.argwhere(got != expected)
        for t, r in bad:
            mismatches.append(
                (done + int(t), int(r), int(got[t, r]), int(expected[t, r]))
            )
        done += batch

    # single-vector passes: fill plus one result, plus the correction stage(s)
    cycles = cfg.size + cfg.mac_plus_stages
    cycles_exact = cfg.size
    return EquivalenceReport(
        cfg.size, mult, n_tiles, seed, mismatches, cycles, cycles_exact
    )
