"""Approximate multiplier behavior: frozen values, closed forms, bounds.

The expected numbers below were worked out by hand from the partial
product definitions and are frozen; the code must reproduce them.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axsim.multipliers import (
    AxMultConfig,
    MultKind,
    UProduct,
    error_bound,
    mult_error,
    mult_error_array,
    multiply_approx,
    multiply_approx_array,
    multiply_exact,
    multiply_exact_array,
    x_value,
    x_value_array,
)
from conftest import APPROX_CONFIGS, EXACT

CODES = np.arange(256, dtype=np.int64)
GRID_W = np.repeat(CODES, 256)
GRID_A = np.tile(CODES, 256)


def test_exact_products():
    assert multiply_exact(EXACT, 0, 255) == 0
    assert multiply_exact(EXACT, 1, 173) == 173
    assert multiply_exact(EXACT, 255, 255) == 65025


def test_frozen_perforated():
    cfg = AxMultConfig(MultKind.PERFORATED, 2)
    # 5*7 = 35; dropping the two low bits of a=7 leaves 5*4 = 20
    assert multiply_approx(cfg, 5, 7) == UProduct(20, 2)
    assert mult_error(cfg, 5, 7) == 15
    cfg3 = AxMultConfig(MultKind.PERFORATED, 3)
    assert mult_error(cfg3, 100, 7) == 700
    assert multiply_approx(cfg3, 100, 7).value == 0


def test_frozen_recursive():
    cfg = AxMultConfig(MultKind.RECURSIVE, 3)
    # error is (255 mod 8)^2 = 49
    assert multiply_approx(cfg, 255, 255).value == 65025 - 49
    assert mult_error(cfg, 255, 255) == 49


def test_frozen_truncated():
    cfg = AxMultConfig(MultKind.TRUNCATED, 4)
    assert multiply_approx(cfg, 17, 15).value == 240
    assert mult_error(cfg, 17, 15) == 15


def test_x_values():
    assert x_value(AxMultConfig(MultKind.PERFORATED, 3), 13) == 5
    assert x_value(AxMultConfig(MultKind.RECURSIVE, 3), 13) == 5
    t5 = AxMultConfig(MultKind.TRUNCATED, 5)
    assert x_value(t5, 32) == 0
    assert x_value(t5, 33) == 1
    with pytest.raises(ValueError):
        x_value(EXACT, 10)


def test_config_validation():
    with pytest.raises(ValueError):
        AxMultConfig(MultKind.PERFORATED, 8)
    with pytest.raises(ValueError):
        AxMultConfig(MultKind.RECURSIVE, 8)
    with pytest.raises(ValueError):
        AxMultConfig(MultKind.TRUNCATED, 15)
    with pytest.raises(ValueError):
        AxMultConfig(MultKind.PERFORATED, -1)
    # exact never takes an approximation parameter
    with pytest.raises(ValueError):
        AxMultConfig(MultKind.EXACT, 2)


def test_operand_validation():
    cfg = AxMultConfig(MultKind.PERFORATED, 1)
    with pytest.raises(ValueError):
        multiply_approx(cfg, 256, 0)
    with pytest.raises(ValueError):
        multiply_approx(cfg, 0, -1)


@pytest.mark.parametrize("cfg", APPROX_CONFIGS, ids=lambda c: c.describe())
def test_exhaustive_grid(cfg):
    """Over all 65536 operand pairs: error closed form, divisibility,
    bounds, and scalar/vector agreement on a sample."""
    exact = multiply_exact_array(cfg, GRID_W, GRID_A)
    approx = multiply_approx_array(cfg, GRID_W, GRID_A)
    err = mult_error_array(cfg, GRID_W, GRID_A)
    assert np.array_equal(exact - approx, err)
    assert (err >= 0).all()
    assert int(err.max()) == error_bound(cfg)
    step = 1 << cfg.m
    assert (approx % step == 0).all()
    assert int(approx.max()) <= (1 << 16) - step

    rng = np.random.default_rng(cfg.m)
    for _ in range(40):
        w, a = int(rng.integers(256)), int(rng.integers(256))
        p = multiply_approx(cfg, w, a)
        assert p.value == approx[w * 256 + a]
        assert p.shift == cfg.m
        assert p.value == p.significand << cfg.m
        assert mult_error(cfg, w, a) == err[w * 256 + a]


@pytest.mark.parametrize(
    "kind,ms",
    [
        (MultKind.PERFORATED, range(1, 7)),
        (MultKind.RECURSIVE, range(1, 7)),
        (MultKind.TRUNCATED, range(1, 14)),
    ],
)
def test_error_monotone_in_m(kind, ms):
    """More pruning never shrinks the error of any operand pair."""
    prev = None
    for m in ms:
        err = mult_error_array(AxMultConfig(kind, m), GRID_W, GRID_A)
        if prev is not None:
            assert (err >= prev).all()
        prev = err


def test_x_value_array_matches_scalar():
    for cfg in APPROX_CONFIGS:
        arr = x_value_array(cfg, CODES)
        assert arr.tolist() == [x_value(cfg, int(a)) for a in CODES]


@given(st.integers(0, 255), st.integers(0, 255))
@settings(max_examples=60)
def test_zero_operands_are_error_free(w, a):
    """A zero factor leaves nothing to prune in any family."""
    for cfg in APPROX_CONFIGS:
        assert mult_error(cfg, w, 0) == 0
        assert mult_error(cfg, 0, a) == 0
        assert multiply_approx(cfg, w, 0).value == 0
        assert multiply_approx(cfg, 0, a).value == 0


def test_error_bound_values():
    assert error_bound(AxMultConfig(MultKind.PERFORATED, 2)) == 255 * 3
    assert error_bound(AxMultConfig(MultKind.RECURSIVE, 3)) == 49
    assert error_bound(AxMultConfig(MultKind.TRUNCATED, 4)) == 4 * 16 - 15


def test_describe():
    assert AxMultConfig(MultKind.PERFORATED, 2).describe() == "perforated m=2"
    assert EXACT.describe() == "exact"
