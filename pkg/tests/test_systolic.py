"""MAC-array model: widths, per-cell steps, streaming, equivalence."""

import io

import numpy as np
import pytest

from axsim.multipliers import AxMultConfig, MultKind
from axsim.systolic import (
    SUPPORTED_SIZES,
    MacArrayConfig,
    RowState,
    SimulatorFault,
    equivalence_check,
    initial_state,
    mac_plus,
    mac_star_step,
    run_tile,
)
from axsim.variates import Filter, corrected_dot, derive_constants
from conftest import APPROX_CONFIGS, EXACT

PERF2 = AxMultConfig(MultKind.PERFORATED, 2)


def test_supported_sizes():
    """The presets the CLI exposes; the model itself takes any size."""
    assert SUPPORTED_SIZES == (16, 32, 48, 64)
    odd = MacArrayConfig(17, PERF2)
    assert odd.width_main_adder == (17 * 65535).bit_length()
    with pytest.raises(ValueError):
        MacArrayConfig(0, PERF2)
    with pytest.raises(ValueError):
        MacArrayConfig(16, PERF2, mac_plus_stages=3)


def test_adder_widths_n64():
    """Full-size array: the running sum must hold 64 products of 65535."""
    cfg = MacArrayConfig(64, PERF2)
    assert cfg.width_main_adder == 22
    assert cfg.width_star_adder == 20  # stripped domain drops m bits
    assert cfg.width_sumx_adder == 8  # 64 * 3 = 192 needs 8 bits
    assert cfg.width_plus_mult == (8, 8)


def test_adder_widths_other_sizes():
    assert MacArrayConfig(16, PERF2).width_main_adder == 20
    assert MacArrayConfig(32, PERF2).width_main_adder == 21
    assert MacArrayConfig(48, PERF2).width_main_adder == 22
    t7 = MacArrayConfig(64, AxMultConfig(MultKind.TRUNCATED, 7))
    assert t7.x_elem_max == 1
    assert t7.width_sumx_adder == 7
    r5 = MacArrayConfig(64, AxMultConfig(MultKind.RECURSIVE, 5))
    assert r5.width_star_adder == 17
    exact = MacArrayConfig(64, EXACT)
    assert exact.width_star_adder == exact.width_main_adder == 22


def test_initial_state_strips_low_bits():
    cfg = MacArrayConfig(16, AxMultConfig(MultKind.PERFORATED, 3))
    st = initial_state(cfg, 200)
    assert st.sum == 200 >> 3
    assert st.sum_x == 0
    exact_cfg = MacArrayConfig(16, EXACT)
    assert initial_state(exact_cfg, 200).sum == 200


def test_mac_star_step_frozen():
    cfg = MacArrayConfig(16, AxMultConfig(MultKind.PERFORATED, 3))
    st = mac_star_step(cfg, 255, 8, initial_state(cfg, 0))
    # 255*8 = 2040 has no dropped rows (8 mod 8 = 0), stripped by 3 bits
    assert st.sum == 255
    assert st.sum_x == 0
    st2 = mac_star_step(cfg, 255, 9, st)
    # 255*9 loses 255*(9 mod 8) = 255, leaving 2040 again
    assert st2.sum == 510
    assert st2.sum_x == 1


def test_mac_star_overflow_faults():
    cfg = MacArrayConfig(16, PERF2)
    full = RowState(sum=(1 << cfg.width_star_adder) - 1, sum_x=0)
    with pytest.raises(SimulatorFault):
        mac_star_step(cfg, 255, 255, full)
    full_x = RowState(sum=0, sum_x=(1 << cfg.width_sumx_adder) - 1)
    with pytest.raises(SimulatorFault):
        mac_star_step(cfg, 0, 3, full_x)


def test_mac_plus_frozen():
    cfg = MacArrayConfig(16, PERF2)
    consts = derive_constants(PERF2, Filter((0, 0)))
    out = mac_plus(cfg, consts, RowState(sum=5, sum_x=0), bias_low=3)
    assert out == (5 << 2) | 3


def test_mac_plus_c_width_fault():
    cfg = MacArrayConfig(16, AxMultConfig(MultKind.TRUNCATED, 7), hardware_rounding=True)
    consts = derive_constants(
        AxMultConfig(MultKind.TRUNCATED, 7), Filter((255,) * 8), hardware_rounding=True
    )
    assert consts.c_width_exceeded
    with pytest.raises(SimulatorFault):
        mac_plus(cfg, consts, RowState(sum=0, sum_x=0), bias_low=0)


@pytest.mark.parametrize("cfg", APPROX_CONFIGS, ids=lambda c: c.describe())
def test_run_tile_matches_corrected_dot(cfg):
    """Every streamed output equals the reference dot product with
    correction, for multi-vector streams and partial tiles."""
    size = 16
    mac = MacArrayConfig(size, cfg)
    rng = np.random.default_rng(cfg.m * 7 + 1)
    rows, k, n_vec = 5, 11, 4
    weights = rng.integers(0, 256, size=(rows, k), dtype=np.uint8)
    acts = rng.integers(0, 256, size=(n_vec, k), dtype=np.uint8)
    biases = rng.integers(0, 256, size=rows)
    consts = [
        derive_constants(cfg, Filter(tuple(int(v) for v in weights[r])))
        for r in range(rows)
    ]
    outputs, cycles = run_tile(mac, weights, acts, biases, consts)
    assert outputs.shape == (rows, n_vec)
    assert cycles == size + n_vec - 1 + 1
    for r in range(rows):
        flt = Filter(tuple(int(v) for v in weights[r]), bias=int(biases[r]))
        for v in range(n_vec):
            want = corrected_dot(cfg, flt, tuple(int(a) for a in acts[v]), consts[r])
            assert outputs[r, v] == want


def test_run_tile_exact_degenerates_to_dot():
    mac = MacArrayConfig(16, EXACT)
    rng = np.random.default_rng(3)
    weights = rng.integers(0, 256, size=(4, 10), dtype=np.uint8)
    acts = rng.integers(0, 256, size=(2, 10), dtype=np.uint8)
    biases = np.array([1000, -50, 0, 77])
    outputs, cycles = run_tile(mac, weights, acts, biases)
    want = weights.astype(np.int64) @ acts.astype(np.int64).T + biases[:, None]
    assert np.array_equal(outputs, want)
    assert cycles == 16 + 2 - 1


def test_run_tile_single_vector_shape():
    mac = MacArrayConfig(16, PERF2)
    weights = np.full((2, 3), 10, dtype=np.uint8)
    consts = [derive_constants(PERF2, Filter((10, 10, 10)))] * 2
    out, _ = run_tile(mac, weights, np.array([3, 3, 3]), np.zeros(2, int), consts)
    assert out.shape == (2,)
    assert out.tolist() == [90, 90]  # all products restored by C*sumX


def test_run_tile_negative_and_large_bias():
    """Bias bits beyond the 8 preloaded ones are folded in at the output."""
    cfg = AxMultConfig(MultKind.RECURSIVE, 3)
    mac = MacArrayConfig(16, cfg)
    rng = np.random.default_rng(8)
    weights = rng.integers(0, 256, size=(3, 6), dtype=np.uint8)
    acts = rng.integers(0, 256, size=(1, 6), dtype=np.uint8)
    biases = np.array([-3000, 100000, -1])
    consts = [
        derive_constants(cfg, Filter(tuple(int(v) for v in weights[r])))
        for r in range(3)
    ]
    outputs, _ = run_tile(mac, weights, acts, biases, consts)
    for r in range(3):
        flt = Filter(tuple(int(v) for v in weights[r]), bias=int(biases[r]))
        assert outputs[r, 0] == corrected_dot(cfg, flt, tuple(int(a) for a in acts[0]), consts[r])


def test_run_tile_validation():
    mac = MacArrayConfig(16, PERF2)
    w = np.zeros((17, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        run_tile(mac, w, np.zeros(3, np.uint8), np.zeros(17, int), None)
    w = np.zeros((2, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        run_tile(mac, w, np.zeros(3, np.uint8), np.zeros(2, int), None)  # no consts
    bad_consts = [derive_constants(AxMultConfig(MultKind.PERFORATED, 1), Filter((0, 0, 0)))] * 2
    with pytest.raises(ValueError):
        run_tile(mac, w, np.zeros(3, np.uint8), np.zeros(2, int), bad_consts)


def test_run_tile_worst_case_never_faults():
    """All-255 everything at full width exercises the capacity bounds."""
    for size in (16, 64):
        for cfg in (PERF2, AxMultConfig(MultKind.TRUNCATED, 7)):
            mac = MacArrayConfig(size, cfg)
            weights = np.full((size, size), 255, dtype=np.uint8)
            acts = np.full((1, size), 255, dtype=np.uint8)
            consts = [
                derive_constants(cfg, Filter((255,) * size)) for _ in range(size)
            ]
            biases = np.full(size, 255)
            outputs, _ = run_tile(mac, weights, acts, biases, consts)
            flt = Filter((255,) * size, bias=255)
            want = corrected_dot(cfg, flt, (255,) * size, consts[0])
            assert (outputs[:, 0] == want).all()


def test_trace_output_is_deterministic():
    mac = MacArrayConfig(16, PERF2)
    weights = np.array([[5, 7]], dtype=np.uint8)
    consts = [derive_constants(PERF2, Filter((5, 7)))]
    bufs = []
    for _ in range(2):
        buf = io.StringIO()
        run_tile(mac, weights, np.array([[3, 200]]), np.array([9]), consts, trace=buf)
        bufs.append(buf.getvalue())
    assert bufs[0] == bufs[1]
    lines = bufs[0].strip().splitlines()
    assert lines[0] == "vector,row,col,sum,sum_x"
    assert len(lines) == 3  # header + one row per column
    assert all(line.startswith("0,0,") for line in lines[1:])


@pytest.mark.parametrize(
    "cfg",
    [PERF2, AxMultConfig(MultKind.RECURSIVE, 5), AxMultConfig(MultKind.TRUNCATED, 6)],
    ids=lambda c: c.describe(),
)
def test_equivalence_check_passes(cfg):
    mac = MacArrayConfig(16, cfg)
    rep = equivalence_check(mac, 50, seed=3, rows_per_tile=8)
    assert rep.passed
    assert rep.mismatches == []
    assert rep.n_tiles == 50
    assert rep.latency_overhead == 1


def test_equivalence_check_detects_injected_fault():
    # the corrupted bit must sit above the m stripped positions to matter
    mac = MacArrayConfig(16, PERF2)
    rep = equivalence_check(mac, 10, seed=3, fault_xor=(4, 2, 5, 64), rows_per_tile=8)
    assert not rep.passed
    assert any(t == 4 and r == 2 for t, r, _, _ in rep.mismatches)


def test_equivalence_check_ignores_subthreshold_fault():
    # flipping a bit the strip discards must not trip the checker
    mac = MacArrayConfig(16, PERF2)
    rep = equivalence_check(mac, 10, seed=3, fault_xor=(4, 2, 5, 1), rows_per_tile=8)
    assert rep.passed


def test_equivalence_check_rejects_exact():
    with pytest.raises(ValueError):
        equivalence_check(MacArrayConfig(16, EXACT), 1, seed=0)


def test_two_stage_correction_latency():
    mac = MacArrayConfig(16, PERF2, mac_plus_stages=2)
    rep = equivalence_check(mac, 5, seed=1, rows_per_tile=4)
    assert rep.passed
    assert rep.latency_overhead == 2
