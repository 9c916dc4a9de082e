"""Figure rendering for CLI reports.

Matplotlib is imported lazily and forced onto the Agg backend so reports
render to PNG files in headless environments and plain (plot-free) CLI
runs never pay the import cost.  Every function takes already-computed
report rows and returns the path it wrote.
"""

from __future__ import annotations

import numpy as np

from .multipliers import AxMultConfig
from .stats import OperandDistribution, error_grid

_KIND_COLORS = {
    "perforated": "tab:blue",
    "recursive": "tab:orange",
    "truncated": "tab:green",
    "exact": "black",
}


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    _plt().close(fig)
    return path


def render_error_distribution(
    cfg: AxMultConfig,
    dist_w: OperandDistribution,
    dist_a: OperandDistribution,
    mc_mean: float,
    mc_std: float,
    path,
):
    """Exact single-multiplication error pmf with the MC summary overlaid."""
    plt = _plt()
    errs, probs = error_grid(cfg, dist_w, dist_a)
    flat_e, flat_p = errs.ravel(), probs.ravel()
    hi = int(flat_e.max())
    bins = np.linspace(-0.5, hi + 0.5, min(hi + 2, 129))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.hist(flat_e, bins=bins, weights=flat_p, color="tab:blue", alpha=0.85)
    ax.axvline(mc_mean, color="tab:red", lw=1.2, label=f"MC mean {mc_mean:.2f}")
    ax.axvline(
        mc_mean + mc_std, color="tab:red", lw=0.8, ls="--", label=f"MC std {mc_std:.2f}"
    )
    ax.set_xlabel("multiplication error")
    ax.set_ylabel("probability")
    ax.set_title(
        f"{cfg.describe()} error, W~{dist_w.describe()}, A~{dist_a.describe()}"
    )
    ax.legend()
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def render_variance_scatter(rows: list[dict], title: str, path):
    """Per-filter corrected vs uncorrected error std (dot-product level)."""
    plt = _plt()
    raw = np.array([r["std_uncorrected"] for r in rows], dtype=float)
    cor = np.array([r["std_corrected"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 5.0))
    lo = max(min(cor.min(), raw.min()) * 0.8, 1e-3)
    hi = max(raw.max(), cor.max()) * 1.2
    ax.plot([lo, hi], [lo, hi], color="gray", lw=1, ls="--", label="no reduction")
    ax.scatter(raw, cor, s=22, color="tab:blue", zorder=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    ax.set_xlabel("uncorrected error std")
    ax.set_ylabel("corrected error std")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    return _finish(fig, path)


def render_layer_mse(names: list[str], values: list[float], title: str, path):
    """Per-layer divergence (dequantized MSE) of one inference run."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    pos = np.arange(len(names))
    ax.bar(pos, values, color="tab:blue", width=0.6)
    ax.set_xticks(pos, names, rotation=30, ha="right")
    ax.set_ylabel("MSE vs exact path")
    if values and max(values) > 0:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(alpha=0.3, axis="y")
    return _finish(fig, path)


def render_accuracy_sweep(rows: list[dict], baseline: float | None, path):
    """Accuracy vs m per multiplier kind, corrected and uncorrected."""
    plt = _plt()
    kinds = sorted(
        {r["kind"] for r in rows if r["kind"] != "exact"},
        key=lambda k: min(r["m"] for r in rows if r["kind"] == k),
    )
    fig, axes = plt.subplots(
        1, max(len(kinds), 1), figsize=(3.6 * max(len(kinds), 1), 3.8), sharey=True
    )
    if len(kinds) <= 1:
        axes = [axes]
    for ax, kind in zip(axes, kinds):
        sub = [r for r in rows if r["kind"] == kind]
        for with_v, style, label in ((True, "-o", "corrected"), (False, "--s", "uncorrected")):
            pts = sorted(
                (r["m"], r["accuracy"]) for r in sub if r["with_variate"] == with_v
            )
            if pts:
                ax.plot(
                    [p[0] for p in pts],
                    [p[1] for p in pts],
                    style,
                    color=_KIND_COLORS.get(kind, "tab:blue"),
                    alpha=1.0 if with_v else 0.55,
                    label=label,
                )
        if baseline is not None:
            ax.axhline(baseline, color="black", lw=1, ls=":", label="exact")
        ax.set_title(kind)
        ax.set_xlabel("m")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    axes[0].set_ylabel("accuracy")
    return _finish(fig, path)
