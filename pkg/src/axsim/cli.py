"""Command-line reports over the simulation library.

Subcommands:
    stats           single-multiplication error statistics (MC + exact)
    conv-error      dot-product error with and without correction
    systolic-check  MAC-array equivalence against the direct reference
    infer           quantized CNN inference on a model/dataset pair
    sweep           inference accuracy across multiplier configurations

Reports are delimited text: CSV with `#` comment lines carrying the
schema version and the full run configuration (including seed and RNG
algorithm), or JSON with the same configuration echoed.  `--plot` renders
PNG figures next to the report file, so it requires `--out`.

A JSON file passed via `--config` supplies defaults for any long flag of
the chosen subcommand (keys use underscores); explicit flags win.

Exit codes: 0 success, 2 bad configuration or usage, 3 unreadable or
malformed input file, 4 equivalence check found mismatches.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import figures
from .inference import (
    Conv2dLayer,
    DenseLayer,
    forward,
    isolated_layer_mse,
    load_model,
)
from .modelfile import ModelFormatError, read_dataset
from .multipliers import AxMultConfig, MultKind
from .stats import (
    RNG_ALGORITHM,
    OperandDistribution,
    collect_conv_moments,
    exact_mult_error_stats,
    make_rng,
    mult_error_stats,
)
from .systolic import SUPPORTED_SIZES, MacArrayConfig, equivalence_check
from .variates import derive_constants

SCHEMA_VERSION = 1
_KINDS = {k.value: k for k in MultKind}


class CliError(Exception):
    """Usage or configuration problem; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Argument plumbing.
# ---------------------------------------------------------------------------


def parse_dist(text: str) -> OperandDistribution:
    """'uniform', 'uniform:lo,hi' or 'normal:mu,sigma'."""
    name, _, rest = text.partition(":")
    try:
        if name == "uniform":
            if not rest:
                return OperandDistribution.uniform()
            lo, hi = (int(v) for v in rest.split(","))
            return OperandDistribution.uniform(lo, hi)
        if name == "normal":
            mu, sigma = (float(v) for v in rest.split(","))
            return OperandDistribution.normal(mu, sigma)
    except ValueError as exc:
        raise CliError(f"bad distribution {text!r}: {exc}") from None
    raise CliError(f"unknown distribution {name!r} (use uniform or normal)")


def parse_sweep_configs(text: str) -> list[tuple[MultKind, int]]:
    """'perforated:1-3,recursive:2,truncated:4-7' -> [(kind, m), ...]."""
    out: list[tuple[MultKind, int]] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        kind_name, _, rng_txt = part.partition(":")
        if kind_name not in _KINDS or _KINDS[kind_name] is MultKind.EXACT:
            raise CliError(f"bad sweep kind {kind_name!r}")
        if not rng_txt:
            raise CliError(f"sweep entry {part!r} needs m or lo-hi")
        lo_txt, _, hi_txt = rng_txt.partition("-")
        try:
            lo = int(lo_txt)
            hi = int(hi_txt) if hi_txt else lo
        except ValueError:
            raise CliError(f"bad m range {rng_txt!r} in {part!r}") from None
        if hi < lo:
            raise CliError(f"empty m range {rng_txt!r} in {part!r}")
        out.extend((_KINDS[kind_name], m) for m in range(lo, hi + 1))
    if not out:
        raise CliError("sweep configuration is empty")
    return out


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset (None) options from the --config JSON file."""
    if not args.config:
        return
    try:
        raw = Path(args.config).read_text()
    except OSError as exc:
        raise exc
    try:
        conf = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"--config file is not valid JSON: {exc}") from None
    if not isinstance(conf, dict):
        raise CliError("--config file must hold a JSON object")
    reserved = {"command", "config"}
    for key, value in conf.items():
        dest = key.replace("-", "_")
        if dest in reserved or not hasattr(args, dest):
            raise CliError(
                f"--config key {key!r} is not an option of this subcommand"
            )
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def _opt(args: argparse.Namespace, name: str, default):
    v = getattr(args, name)
    return default if v is None else v


def _mult_config(args: argparse.Namespace, allow_exact: bool) -> AxMultConfig:
    kind_name = getattr(args, "kind", None)
    if kind_name is None:
        raise CliError("--kind is required")
    kind = _KINDS.get(kind_name)
    if kind is None:
        raise CliError(f"unknown kind {kind_name!r}")
    if kind is MultKind.EXACT:
        if not allow_exact:
            raise CliError("this command needs an approximate kind")
        return AxMultConfig(kind)
    m = getattr(args, "m", None)
    if m is None:
        raise CliError(f"--m is required for kind {kind_name!r}")
    return AxMultConfig(kind, int(m))


# ---------------------------------------------------------------------------
# Report output.
# ---------------------------------------------------------------------------


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def _emit(args, command: str, config_echo: dict, header: list[str], rows) -> None:
    fmt = _opt(args, "format", "csv")
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# axsim {command} report\n")
        buf.write(f"# schema_version={SCHEMA_VERSION}\n")
        for k, v in config_echo.items():
            buf.write(f"# {k}={_format_cell(v)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
        text = buf.getvalue()
    elif fmt == "json":
        payload = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": config_echo,
            "results": [dict(zip(header, row)) for row in rows],
        }
        text = json.dumps(payload, indent=2) + "\n"
    else:
        raise CliError(f"unknown format {fmt!r} (use csv or json)")

    out = getattr(args, "out", None)
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _plot_path(args, tag: str) -> Path:
    out = getattr(args, "out", None)
    if not out or out == "-":
        raise CliError("--plot requires --out so figures land next to the report")
    base = Path(out)
    return base.with_name(base.stem + f"_{tag}.png")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    cfg = _mult_config(args, allow_exact=True)
    dist_w = parse_dist(_opt(args, "dist_w", "uniform"))
    dist_a = parse_dist(_opt(args, "dist_a", "uniform"))
    samples = int(_opt(args, "samples", 1_000_000))
    seed = int(_opt(args, "seed", 0))

    st = mult_error_stats(cfg, dist_w, dist_a, samples, seed)
    exact_mean, exact_std = exact_mult_error_stats(cfg, dist_w, dist_a)

    echo = {
        "config": cfg.describe(),
        "dist_w": dist_w.describe(),
        "dist_a": dist_a.describe(),
        "samples": samples,
        "seed": seed,
        "rng": RNG_ALGORITHM,
    }
    header = ["kind", "m", "samples", "mean", "std", "exact_mean", "exact_std"]
    rows = [
        (
            cfg.kind.value,
            cfg.m,
            samples,
            round(st.mean, 6),
            round(st.std, 6),
            round(exact_mean, 6),
            round(exact_std, 6),
        )
    ]
    _emit(args, "stats", echo, header, rows)
    if args.plot:
        p = figures.render_error_distribution(
            cfg, dist_w, dist_a, st.mean, st.std, _plot_path(args, "distribution")
        )
        _note(f"wrote {p}")
    return 0


def cmd_conv_error(args) -> int:
    cfg = _mult_config(args, allow_exact=False)
    k = int(_opt(args, "k", 64))
    n_filters = int(_opt(args, "filters", 8))
    vectors = int(_opt(args, "vectors", 100_000))
    dist = parse_dist(_opt(args, "dist", "uniform"))
    seed = int(_opt(args, "seed", 0))
    hw_round = bool(_opt(args, "hardware_rounding", False))
    if k < 1 or n_filters < 1 or vectors < 1:
        raise CliError("--k, --filters and --vectors must be positive")

    from .variates import Filter

    header = [
        "filter",
        "k",
        "c",
        "c0",
        "mean_uncorrected",
        "std_uncorrected",
        "mean_corrected",
        "std_corrected",
    ]
    rows = []
    dict_rows = []
    for i in range(n_filters):
        wrng = make_rng(seed, 101, i)
        flt = Filter(tuple(int(v) for v in wrng.integers(0, 256, size=k)))
        consts = derive_constants(cfg, flt, hardware_rounding=hw_round)
        moments = collect_conv_moments(cfg, flt, dist, vectors, seed + i)
        mean_unc = float(moments.mean_error())
        std_unc = float(moments.var_error()) ** 0.5
        mean_cor = float(moments.mean_error_runtime(consts))
        std_cor = float(moments.var_error(consts.c)) ** 0.5
        rows.append(
            (
                i,
                k,
                round(float(consts.c), 6),
                consts.c0,
                round(mean_unc, 4),
                round(std_unc, 4),
                round(mean_cor, 4),
                round(std_cor, 4),
            )
        )
        dict_rows.append({"std_uncorrected": std_unc, "std_corrected": std_cor})

    echo = {
        "config": cfg.describe(),
        "dist": dist.describe(),
        "k": k,
        "filters": n_filters,
        "vectors": vectors,
        "hardware_rounding": hw_round,
        "seed": seed,
        "rng": RNG_ALGORITHM,
    }
    _emit(args, "conv-error", echo, header, rows)
    if args.plot:
        p = figures.render_variance_scatter(
            dict_rows,
            f"{cfg.describe()}, k={k}, {vectors} vectors",
            _plot_path(args, "variance"),
        )
        _note(f"wrote {p}")
    return 0


def cmd_systolic_check(args) -> int:
    cfg = _mult_config(args, allow_exact=False)
    size = int(_opt(args, "array_size", 64))
    tiles = int(_opt(args, "tiles", 1000))
    seed = int(_opt(args, "seed", 0))
    hw_round = bool(_opt(args, "hardware_rounding", False))
    if size not in SUPPORTED_SIZES:
        raise CliError(f"--array-size must be one of {SUPPORTED_SIZES}")
    if tiles < 1:
        raise CliError("--tiles must be positive")

    mac = MacArrayConfig(size, cfg, hardware_rounding=hw_round)
    rep = equivalence_check(mac, tiles, seed)

    echo = {
        "config": cfg.describe(),
        "array_size": size,
        "tiles": tiles,
        "hardware_rounding": hw_round,
        "seed": seed,
        "rng": RNG_ALGORITHM,
    }
    header = [
        "kind",
        "m",
        "array_size",
        "tiles",
        "mismatches",
        "passed",
        "cycles",
        "cycles_exact",
        "latency_overhead",
        "width_main",
        "width_star",
        "width_sumx",
    ]
    rows = [
        (
            cfg.kind.value,
            cfg.m,
            size,
            tiles,
            len(rep.mismatches),
            rep.passed,
            rep.cycles,
            rep.cycles_exact,
            rep.latency_overhead,
            mac.width_main_adder,
            mac.width_star_adder,
            mac.width_sumx_adder,
        )
    ]
    _emit(args, "systolic-check", echo, header, rows)
    if not rep.passed:
        first = rep.mismatches[0]
        _note(
            f"equivalence FAILED: {len(rep.mismatches)} mismatching outputs, "
            f"first at tile {first[0]} row {first[1]}: got {first[2]}, expected {first[3]}"
        )
        return 4
    return 0


def _layer_names(model) -> list[str]:
    names = []
    for layer in model.layers:
        if isinstance(layer, (Conv2dLayer, DenseLayer)):
            names.append(layer.name)
        else:
            names.append(type(layer).__name__.removesuffix("Layer").lower())
    return names


def _load_model_and_data(args):
    for flag in ("model", "images", "labels"):
        if getattr(args, flag, None) is None:
            raise CliError(f"--{flag} is required")
    model = load_model(args.model)
    images, labels = read_dataset(args.images, args.labels)
    limit = getattr(args, "limit", None)
    if limit is not None:
        limit = int(limit)
        if limit < 1:
            raise CliError("--limit must be positive")
        images, labels = images[:limit], labels[:limit]
    return model, images, labels


def _batched_predictions(model, images, cfg, with_variate, hw_round, batch=512):
    preds = []
    for lo in range(0, images.shape[0], batch):
        res = forward(model, images[lo : lo + batch], cfg, with_variate, hw_round)
        preds.append(res.predictions)
    return np.concatenate(preds)


def cmd_infer(args) -> int:
    cfg = _mult_config(args, allow_exact=True)
    with_variate = bool(_opt(args, "with_variate", True))
    hw_round = bool(_opt(args, "hardware_rounding", False))
    model, images, labels = _load_model_and_data(args)

    preds = _batched_predictions(model, images, cfg, with_variate, hw_round)
    accuracy = float(np.mean(preds == labels))

    layer_mse: list[tuple[str, float]] = []
    if cfg.kind is not MultKind.EXACT:
        # sample at most 256 images for the per-layer divergence figures
        probe = images[:256]
        layer_mse = isolated_layer_mse(model, probe, cfg, with_variate, hw_round)

    echo = {
        "config": cfg.describe(),
        "with_variate": with_variate,
        "hardware_rounding": hw_round,
        "model": str(args.model),
        "images": str(args.images),
        "n_images": int(images.shape[0]),
    }
    ref_acc = model.reference_accuracy
    if ref_acc is not None:
        echo["reference_accuracy"] = ref_acc
    header = ["metric", "layer", "value"]
    rows = [("accuracy", "", round(accuracy, 6))]
    rows += [("layer_mse", name, float(f"{mse:.8g}")) for name, mse in layer_mse]
    _emit(args, "infer", echo, header, rows)
    if args.plot:
        if not layer_mse:
            _note("nothing to plot for the exact multiplier")
        else:
            p = figures.render_layer_mse(
                [n for n, _ in layer_mse],
                [v for _, v in layer_mse],
                f"{cfg.describe()}, correction {'on' if with_variate else 'off'}",
                _plot_path(args, "layer_mse"),
            )
            _note(f"wrote {p}")
    return 0


def cmd_sweep(args) -> int:
    hw_round = bool(_opt(args, "hardware_rounding", False))
    selector = _opt(args, "configs", "perforated:1-3,recursive:2-5,truncated:4-7")
    combos = parse_sweep_configs(selector)
    model, images, labels = _load_model_and_data(args)

    exact_preds = _batched_predictions(
        model, images, AxMultConfig(MultKind.EXACT), True, hw_round
    )
    baseline = float(np.mean(exact_preds == labels))

    header = ["kind", "m", "with_variate", "accuracy", "accuracy_drop"]
    rows = [("exact", 0, None, round(baseline, 6), 0.0)]
    plot_rows = []
    for kind, m in combos:
        cfg = AxMultConfig(kind, m)
        for with_v in (False, True):
            preds = _batched_predictions(model, images, cfg, with_v, hw_round)
            acc = float(np.mean(preds == labels))
            rows.append(
                (kind.value, m, with_v, round(acc, 6), round(baseline - acc, 6))
            )
            plot_rows.append(
                {"kind": kind.value, "m": m, "with_variate": with_v, "accuracy": acc}
            )
            _note(f"{cfg.describe()} variate={with_v}: accuracy {acc:.4f}")

    echo = {
        "configs": selector,
        "hardware_rounding": hw_round,
        "model": str(args.model),
        "images": str(args.images),
        "n_images": int(images.shape[0]),
        "exact_accuracy": round(baseline, 6),
    }
    _emit(args, "sweep", echo, header, rows)
    if args.plot:
        p = figures.render_accuracy_sweep(
            plot_rows, baseline, _plot_path(args, "accuracy")
        )
        _note(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axsim",
        description="Bit-exact simulation of approximate 8-bit multipliers "
        "with control-variate error correction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help="report file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="report format (default csv)")
        p.add_argument(
            "--plot",
            action=argparse.BooleanOptionalAction,
            help="render PNG figures next to the report file",
        )
        p.add_argument("--config", help="JSON file with defaults for these options")

    def add_mult(p: argparse.ArgumentParser, kinds) -> None:
        p.add_argument("--kind", choices=kinds, help="multiplier kind")
        p.add_argument("--m", type=int, help="approximation parameter")

    p = sub.add_parser("stats", help="single-multiplication error statistics")
    add_mult(p, ("exact", "perforated", "recursive", "truncated"))
    p.add_argument("--dist-w", help="weight distribution (uniform[:lo,hi] | normal:mu,sigma)")
    p.add_argument("--dist-a", help="activation distribution")
    p.add_argument("--samples", type=int, help="Monte-Carlo sample count (default 1e6)")
    p.add_argument("--seed", type=int, help="root RNG seed (default 0)")
    add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("conv-error", help="dot-product error with/without correction")
    add_mult(p, ("perforated", "recursive", "truncated"))
    p.add_argument("--k", type=int, help="filter length (default 64)")
    p.add_argument("--filters", type=int, help="number of random filters (default 8)")
    p.add_argument("--vectors", type=int, help="activation vectors per filter (default 1e5)")
    p.add_argument("--dist", help="activation distribution (default uniform)")
    p.add_argument("--seed", type=int, help="root RNG seed (default 0)")
    p.add_argument(
        "--hardware-rounding",
        action=argparse.BooleanOptionalAction,
        help="constrain constants to hardware register widths",
    )
    add_common(p)
    p.set_defaults(func=cmd_conv_error)

    p = sub.add_parser("systolic-check", help="MAC-array equivalence check")
    add_mult(p, ("perforated", "recursive", "truncated"))
    p.add_argument(
        "--array-size", type=int, help=f"array dimension, one of {SUPPORTED_SIZES}"
    )
    p.add_argument("--tiles", type=int, help="random tiles to check (default 1000)")
    p.add_argument("--seed", type=int, help="root RNG seed (default 0)")
    p.add_argument(
        "--hardware-rounding",
        action=argparse.BooleanOptionalAction,
        help="constrain constants to hardware register widths",
    )
    add_common(p)
    p.set_defaults(func=cmd_systolic_check)

    def add_model_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", help="quantized model container")
        p.add_argument("--images", help="image blob")
        p.add_argument("--labels", help="label file")
        p.add_argument("--limit", type=int, help="use only the first N images")
        p.add_argument(
            "--hardware-rounding",
            action=argparse.BooleanOptionalAction,
            help="constrain constants to hardware register widths",
        )

    p = sub.add_parser("infer", help="quantized CNN inference")
    add_mult(p, ("exact", "perforated", "recursive", "truncated"))
    add_model_args(p)
    p.add_argument(
        "--variate",
        dest="with_variate",
        action=argparse.BooleanOptionalAction,
        help="apply the control-variate correction (default on)",
    )
    add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="accuracy across multiplier configurations")
    add_model_args(p)
    p.add_argument(
        "--configs",
        help="kind:m or kind:lo-hi list, e.g. 'perforated:1-3,truncated:4-7'",
    )
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
