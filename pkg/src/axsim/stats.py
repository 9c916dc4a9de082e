"""Monte-Carlo and closed-form error statistics for approximate multipliers.

Sampling uses numpy's PCG64 generator (
https://numpy.org/doc/stable/reference/random/bit_generators/pcg64.html),
seeded through SeedSequence; the algorithm name and root seed are carried
into every result so reports are reproducible.

Accumulation is exact: per-sample errors and covariates are integers, and
all sums and sums of squares are gathered as unbounded Python integers
(block-wise through int64 arrays whose block sizes are chosen against
worst-case bounds).  Results are therefore independent of block and merge
order, and a run split across independent streams reduces by plain
addition of the moment containers.

For a filter, a single pass collects the joint moments of the per-vector
error sum e and covariate sum x.  Both the uncorrected error e and the
corrected error e - C*x - C0 are affine in (e, x) for any constants, so
means and variances for unrounded, default, and hardware-width constants all
come from one container without re-sampling; a histogram of x additionally
gives the exact mean of the runtime path, where C*x is rounded to an
integer per vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .multipliers import AxMultConfig, MultKind, error_bound, mult_error_array
from .rounding import rhe_div_pow2_array
from .variates import Filter, FilterConstants, derive_constants

RNG_ALGORITHM = "numpy-pcg64"


def make_rng(seed: int, *stream_key: int) -> np.random.Generator:
    """Deterministic generator; extra key integers derive child streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *stream_key))))


@dataclass(frozen=True)
class OperandDistribution:
    """Distribution of uint8 operand codes: uniform or rounded/clamped normal."""

    family: str
    lo: int = 0
    hi: int = 255
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.family == "uniform":
            if not (0 <= self.lo <= self.hi <= 255):
                raise ValueError(f"bad uniform bounds [{self.lo}, {self.hi}]")
        elif self.family == "normal":
            if self.sigma <= 0:
                raise ValueError(f"sigma must be positive, got {self.sigma}")
        else:
            raise ValueError(f"unknown distribution family {self.family!r}")

    @classmethod
    def uniform(cls, lo: int = 0, hi: int = 255) -> "OperandDistribution":
        return cls("uniform", lo=lo, hi=hi)

    @classmethod
    def normal(cls, mu: float, sigma: float) -> "OperandDistribution":
        return cls("normal", mu=mu, sigma=sigma)

    def sample_array(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "uniform":
            return rng.integers(self.lo, self.hi + 1, size=shape, dtype=np.uint8)
        # round half to even, then clamp into the code range
        raw = np.rint(rng.normal(self.mu, self.sigma, size=shape))
        return np.clip(raw, 0, 255).astype(np.uint8)

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_array(rng, ()))

    def describe(self) -> str:
        if self.family == "uniform":
            return f"uniform[{self.lo},{self.hi}]"
        return f"normal({self.mu},{self.sigma})"

    def pmf(self) -> np.ndarray:
        """Exact probability of each code 0..255 under this sampler.

        Mirrors sample_array: a rounded normal puts the mass below -0.5
        on code 0 and the mass above 254.5 on code 255 (ties at .5 have
        measure zero for a continuous draw).
        """
        p = np.zeros(256)
        if self.family == "uniform":
            p[self.lo : self.hi + 1] = 1.0 / (self.hi - self.lo + 1)
            return p
        edges = (np.arange(257) - 0.5 - self.mu) / (self.sigma * math.sqrt(2.0))
        cdf = 0.5 * (1.0 + np.array([math.erf(e) for e in edges]))
        p = np.diff(cdf)
        p[0] = cdf[1]
        p[255] = 1.0 - cdf[255]
        return p


@dataclass(frozen=True)
class ErrorStats:
    """Summary of an error sample: first two moments plus provenance."""

    mean: float
    std: float
    n_samples: int
    seed: int
    rng: str = RNG_ALGORITHM

    @property
    def variance(self) -> float:
        return self.std * self.std


def _summary(s1: int, s2: int, n: int, seed: int) -> ErrorStats:
    mean = Fraction(s1, n)
    var = Fraction(0)
    if n > 1:
        var = (Fraction(s2) - Fraction(s1 * s1, n)) / (n - 1)
    return ErrorStats(float(mean), math.sqrt(float(var)), n, seed)


def mult_error_stats(
    cfg: AxMultConfig,
    dist_w: OperandDistribution,
    dist_a: OperandDistribution,
    n: int,
    seed: int,
) -> ErrorStats:
    """Mean and sample std of the single-product error over n i.i.d. pairs."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = make_rng(seed)
    s1 = 0
    s2 = 0
    remaining = n
    # |error| < 2^16, so squares stay below 2^32 and a block of 2^18
    # row sums stays far inside int64.
    block = 1 << 18
    while remaining:
        rows = min(block, remaining)
        w = dist_w.sample_array(rng, rows)
        a = dist_a.sample_array(rng, rows)
        err = mult_error_array(cfg, w, a)
        s1 += int(err.sum())
        s2 += int((err * err).sum())
        remaining -= rows
    return _summary(s1, s2, n, seed)


# ---------------------------------------------------------------------------
# Joint moments of the per-vector error sum e and covariate sum x.
# ---------------------------------------------------------------------------


@dataclass
class ConvErrorMoments:
    """Exact joint moments of (e, x) over sampled activation vectors.

    s_* fields are unbounded integers; x_hist counts each observed value of
    x, enabling exact post-hoc evaluation of any function of x alone (such
    as the rounded control-variate term).  d4 tracking is optional float
    bookkeeping used only to estimate the standard error of a variance.
    """

    k: int
    x_max_per_elem: int
    count: int = 0
    s_e: int = 0
    s_x: int = 0
    s_ee: int = 0
    s_ex: int = 0
    s_xx: int = 0
    x_hist: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    d_ref: tuple[float, float] | None = None  # (c, c0) for the float d-moments
    s_d2: float = 0.0
    s_d4: float = 0.0

    def __post_init__(self) -> None:
        hist_len = self.k * self.x_max_per_elem + 1
        if self.x_hist.shape != (hist_len,):
            self.x_hist = np.zeros(hist_len, dtype=np.int64)

    def add_block(self, e: np.ndarray, x: np.ndarray) -> None:
        self.count += e.size
        self.s_e += int(e.sum())
        self.s_x += int(x.sum())
        self.s_ee += int((e * e).sum())
        self.s_ex += int((e * x).sum())
        self.s_xx += int((x * x).sum())
        self.x_hist += np.bincount(x, minlength=self.x_hist.size)
        if self.d_ref is not None:
            c, c0 = self.d_ref
            d = e.astype(np.float64) - c * x.astype(np.float64) - c0
            d2 = d * d
            self.s_d2 += float(d2.sum())
            self.s_d4 += float((d2 * d2).sum())

    def merge(self, other: "ConvErrorMoments") -> "ConvErrorMoments":
        if (self.k, self.x_max_per_elem, self.d_ref) != (
            other.k,
            other.x_max_per_elem,
            other.d_ref,
        ):
            raise ValueError("incompatible moment containers")
        out = ConvErrorMoments(self.k, self.x_max_per_elem, d_ref=self.d_ref)
        out.count = self.count + other.count
        out.s_e = self.s_e + other.s_e
        out.s_x = self.s_x + other.s_x
        out.s_ee = self.s_ee + other.s_ee
        out.s_ex = self.s_ex + other.s_ex
        out.s_xx = self.s_xx + other.s_xx
        out.x_hist = self.x_hist + other.x_hist
        out.s_d2 = self.s_d2 + other.s_d2
        out.s_d4 = self.s_d4 + other.s_d4
        return out

    # -- derived quantities, all exact rationals unless noted ---------------

    def mean_error(self, c: Fraction = Fraction(0), c0: Fraction = Fraction(0)) -> Fraction:
        """Mean of e - c*x - c0 with the correction applied unrounded."""
        return (Fraction(self.s_e) - c * self.s_x) / self.count - c0

    def var_error(self, c: Fraction = Fraction(0)) -> Fraction:
        """Sample variance of e - c*x (c0 shifts cancel), denominator n-1."""
        n = self.count
        if n < 2:
            return Fraction(0)
        lin = Fraction(self.s_e) - c * self.s_x
        quad = Fraction(self.s_ee) - 2 * c * self.s_ex + c * c * self.s_xx
        return (quad - lin * lin / n) / (n - 1)

    def mean_error_runtime(self, consts: FilterConstants) -> Fraction:
        """Exact mean of the integer runtime path e - round(C*x) - C0."""
        values = np.arange(self.x_hist.size, dtype=np.int64)
        v = rhe_div_pow2_array(values * consts.c_num, consts.c_frac_bits)
        correction = int((self.x_hist * v).sum())
        return Fraction(self.s_e - correction, self.count) - consts.c0

    def var_standard_error(self) -> float:
        """Asymptotic standard error of the sample variance of d.

        Uses the float d-moments; requires d_ref to have been set before
        accumulation.
        """
        if self.d_ref is None:
            raise ValueError("d-moment tracking was not enabled")
        n = self.count
        m2 = self.s_d2 / n
        m4 = self.s_d4 / n
        # d_ref centers d only approximately; with the variate applied the
        # residual mean is negligible against the spread, so treat raw
        # moments as central.
        return math.sqrt(max(m4 - m2 * m2, 0.0) / n)


def _x_max_per_elem(cfg: AxMultConfig) -> int:
    if cfg.kind is MultKind.TRUNCATED:
        return 1 if cfg.m > 0 else 0
    return (1 << cfg.m) - 1


def _block_rows(cfg: AxMultConfig, k: int) -> int:
    # Per-block int64 sums must stay exact: rows * (k * err_max)^2 < 2^63
    # with headroom.  err_max also dominates the covariate bound.
    err_max = max(error_bound(cfg), 1)
    worst_sq = (k * err_max) ** 2
    cap = int(8 * 10**18) // worst_sq
    if cap < 1:
        raise ValueError(f"filter length {k} too large for exact accumulation")
    return max(1, min(2_000_000 // k, cap))


def _row_sums(
    cfg: AxMultConfig, acts: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row error sum e and covariate sum x for an activation block.

    Matrix products run in float64 for speed; every partial sum is an
    integer below 2^53, so the results are exact.
    """
    m = cfg.m
    mask = (1 << m) - 1
    w64 = weights.astype(np.float64)
    if cfg.kind is MultKind.PERFORATED:
        residue = (acts & mask).astype(np.int64)
        e = (residue.astype(np.float64) @ w64).astype(np.int64)
        return e, residue.sum(axis=1)
    if cfg.kind is MultKind.RECURSIVE:
        residue = (acts & mask).astype(np.int64)
        wl = (weights & mask).astype(np.float64)
        e = (residue.astype(np.float64) @ wl).astype(np.int64)
        return e, residue.sum(axis=1)
    if cfg.kind is MultKind.TRUNCATED:
        e = np.zeros(acts.shape[0], dtype=np.int64)
        for i in range(min(m, cfg.n)):
            w_mod = (weights & ((1 << (m - i)) - 1)).astype(np.float64)
            bit = ((acts >> i) & 1).astype(np.float64)
            e += (bit @ w_mod).astype(np.int64) << i
        x = np.count_nonzero(acts & mask, axis=1).astype(np.int64)
        return e, x
    raise ValueError("exact multiplier produces no errors to accumulate")


def collect_conv_moments(
    cfg: AxMultConfig,
    flt: Filter,
    dist_a: OperandDistribution,
    n_vectors: int,
    seed: int,
    track_var_se: FilterConstants | None = None,
) -> ConvErrorMoments:
    """Sample activation vectors and accumulate exact (e, x) moments."""
    if cfg.kind is MultKind.EXACT:
        raise ValueError("exact multiplier produces no errors to accumulate")
    if n_vectors < 1:
        raise ValueError("need at least one vector")
    weights = np.asarray(flt.weights, dtype=np.int64)
    d_ref = None
    if track_var_se is not None:
        d_ref = (float(track_var_se.c_real), float(track_var_se.c0_real))
    moments = ConvErrorMoments(flt.k, _x_max_per_elem(cfg), d_ref=d_ref)
    rng = make_rng(seed)
    remaining = n_vectors
    block = _block_rows(cfg, flt.k)
    while remaining:
        rows = min(block, remaining)
        acts = dist_a.sample_array(rng, (rows, flt.k))
        e, x = _row_sums(cfg, acts, weights)
        moments.add_block(e, x)
        remaining -= rows
    return moments


def conv_error_stats(
    cfg: AxMultConfig,
    flt: Filter,
    dist_a: OperandDistribution,
    n_vectors: int,
    seed: int,
    with_variate: bool = True,
    hardware_rounding: bool = False,
) -> ErrorStats:
    """Accumulator-error statistics for one filter over sampled activations.

    With the variate enabled, the mean reflects the integer runtime path
    (C*x rounded per vector) while the variance is evaluated with the
    correction applied linearly; the two differ by at most the rounding
    granularity.
    """
    moments = collect_conv_moments(cfg, flt, dist_a, n_vectors, seed)
    if not with_variate:
        mean = moments.mean_error()
        var = moments.var_error()
    else:
        consts = derive_constants(cfg, flt, hardware_rounding=hardware_rounding)
        mean = moments.mean_error_runtime(consts)
        var = moments.var_error(consts.c)
    return ErrorStats(float(mean), math.sqrt(float(var)), n_vectors, seed)


# ---------------------------------------------------------------------------
# Closed forms.
# ---------------------------------------------------------------------------


def expected_x(cfg: AxMultConfig) -> float:
    """E[x] for a single uniform uint8 activation."""
    if cfg.kind is MultKind.EXACT:
        raise ValueError("exact multiplier has no correction covariate")
    two_m = 1 << cfg.m
    if cfg.kind is MultKind.TRUNCATED:
        return (two_m - 1) / two_m
    return (two_m - 1) / 2


def closed_form_var_perforated(weights, c, m: int) -> float:
    """Variance of the corrected error for a perforated filter.

    Under uniform activations each covariate is uniform on [0, 2^m - 1]
    with variance (2^m - 1)(2^m + 1)/12, and the corrected error is
    sum_j x_j (w_j - c), hence the weight-spread form below.
    """
    two_m = 1 << m
    var_x = (two_m - 1) * (two_m + 1) / 12
    c = float(c)
    spread = sum((float(w) - c) ** 2 for w in weights)
    return var_x * spread


def error_grid(
    cfg: AxMultConfig,
    dist_w: OperandDistribution,
    dist_a: OperandDistribution,
) -> tuple[np.ndarray, np.ndarray]:
    """All 256x256 multiplication errors with their joint probabilities.

    Returns (errors, probs), both shaped (256, 256) and indexed [w, a].
    Because operands are independent 8-bit codes, this is the complete,
    exact error distribution; Monte-Carlo runs converge to it.
    """
    codes = np.arange(256, dtype=np.int64)
    w = np.repeat(codes, 256)
    a = np.tile(codes, 256)
    errs = mult_error_array(cfg, w, a).reshape(256, 256)
    probs = np.outer(dist_w.pmf(), dist_a.pmf())
    return errs, probs


def exact_mult_error_stats(
    cfg: AxMultConfig,
    dist_w: OperandDistribution,
    dist_a: OperandDistribution,
) -> tuple[float, float]:
    """Exact (mean, std) of the single-multiplication error."""
    errs, probs = error_grid(cfg, dist_w, dist_a)
    e = errs.astype(np.float64)
    mean = float(np.sum(probs * e))
    var = float(np.sum(probs * e * e)) - mean * mean
    return mean, math.sqrt(max(var, 0.0))
