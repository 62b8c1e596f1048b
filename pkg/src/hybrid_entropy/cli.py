"""Command-line front end emitting CSV plot data.

Subcommands:

- ``surface``: pointwise density / entropic integrand on the (q, p) grid
- ``entropies``: every entropy measure of one model
- ``gap-curve``: effective-rank gap law and its relative error
- ``qkd-impact``: Eve bound, degradation and key-length deviation
- ``qkd-rate``: per-symbol key rate versus block size

Exit codes: 0 success, 1 input or configuration error, 2 unsupported dimension.
Diagnostics go to stderr; data goes to ``--out`` (stdout when omitted).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from contextlib import contextmanager

import numpy as np

from . import entropy as ent
from . import qkd
from ._validation import ParameterError, UnsupportedDimensionError
from .noise_model import SPEC_KEYS, build_model, parse_spec, read_spec_file

logger = logging.getLogger("hybrid_entropy")

SURFACE_KINDS = {
    "density": ent.SurfaceKind.DENSITY,
    "diff": ent.SurfaceKind.DIFF_INTEGRAND,
    "renyi": ent.SurfaceKind.RENYI_INTEGRAND,
    "collision": ent.SurfaceKind.COLLISION_INTEGRAND,
}

# Parameters each subcommand accepts through flags or --set, with defaults.
# Model-file keys are accepted on top of these by the model subcommands.
DEFAULTS = {
    "surface": {"kind": "density", "alpha": "2", "grid": "512", "halfwidth": "8"},
    "entropies": {
        "alphas": "0.5,2,3",
        "samples": str(ent.DEFAULT_SAMPLES),
        "seed": "42",
        "grid": "",
        "halfwidth": "8",
        "n_jobs": "1",
    },
    "gap-curve": {"dimension": "2", "r_min": "1", "r_max": "1e6", "points": "601", "threshold": "0.1"},
    "qkd-impact": {"h2": "100", "delta": "-0.1", "leak": "30", "eps_s": "1e-10", "eps_pa": "1e-10"},
    "qkd-rate": {
        "h": "1",
        "delta": "-0.1",
        "leak_rate": "",
        "eps_s": "1e-10",
        "eps_pa": "1e-10",
        "c": "4",
        "n_min": "1e4",
        "n_max": "1e12",
        "points": "81",
    },
}
MODEL_COMMANDS = {"surface", "entropies"}


def fmt(value) -> str:
    """Shortest round-tripping text for a number; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="-", help="CSV destination (default: stdout)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a model or command parameter (repeatable, last wins)",
    )
    common.add_argument("--seed", type=int, help="RNG seed (default 42)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help="key=value model file (default: lambda=1, d=2 model)")
    model.add_argument("--grid", type=int, help="grid points per axis")
    model.add_argument("--halfwidth", type=float, help="grid padding in component sigmas")

    parser = argparse.ArgumentParser(
        prog="hybrid-entropy",
        description="Entropy analysis of Poisson-weighted Gaussian mixture noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("surface", parents=[common, model], help="pointwise surface on the (q,p) grid")
    p.add_argument("--kind", choices=sorted(SURFACE_KINDS))
    p.add_argument("--alpha", type=float, help="Renyi order for --kind renyi")
    p = sub.add_parser("entropies", parents=[common, model], help="all entropy measures of a model")
    p.add_argument("--alpha", type=float, action="append", help="Renyi order (repeatable)")
    p.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    p.add_argument("--n-jobs", type=int, dest="n_jobs", help="sampling threads (results do not depend on it)")
    sub.add_parser("gap-curve", parents=[common], help="effective-rank gap law sweep")
    sub.add_parser("qkd-impact", parents=[common], help="QKD security impact of entropy error")
    sub.add_parser("qkd-rate", parents=[common], help="finite-key rate versus block size")
    return parser


def _parse_overrides(items) -> list[tuple[str, str]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out.append((key, value))
    return out


def resolve(args) -> tuple[dict[str, str], dict[str, str]]:
    """Merge defaults, model file, flags and ``--set`` into (model, params)."""
    params = dict(DEFAULTS[args.command])
    model_entries = {}
    if args.command in MODEL_COMMANDS and args.model:
        model_entries = read_spec_file(args.model)

    flags = {
        "seed": args.seed,
        "kind": getattr(args, "kind", None),
        "grid": getattr(args, "grid", None),
        "halfwidth": getattr(args, "halfwidth", None),
        "samples": getattr(args, "samples", None),
        "n_jobs": getattr(args, "n_jobs", None),
    }
    alpha = getattr(args, "alpha", None)
    if isinstance(alpha, list):
        flags["alphas"] = ",".join(repr(a) for a in alpha)
    else:
        flags["alpha"] = alpha
    for key, value in flags.items():
        if value is not None and key in params:
            params[key] = str(value)

    for key, value in _parse_overrides(args.overrides):
        if args.command in MODEL_COMMANDS and key in SPEC_KEYS:
            target = model_entries
        elif key in params:
            target = params
        else:
            raise ParameterError(f"unknown parameter {key!r} for {args.command}")
        if key in target:
            logger.warning("override %s=%s (was %s)", key, value, target[key])
        else:
            logger.warning("override %s=%s", key, value)
        target[key] = value
    return model_entries, params


def _num(params, key, kind=float):
    text = params[key]
    try:
        value = float(text)
    except ValueError as exc:
        raise ParameterError(f"{key}: not a number: {text!r}") from exc
    if kind is int:
        if value != int(value):
            raise ParameterError(f"{key}: not an integer: {text!r}")
        return int(value)
    return value


def _num_list(params, key):
    try:
        return [float(t) for t in params[key].split(",") if t.strip()]
    except ValueError as exc:
        raise ParameterError(f"{key}: cannot parse {params[key]!r}") from exc


def run_surface(model, params, out) -> None:
    kind = params["kind"]
    if kind not in SURFACE_KINDS:
        raise ParameterError(f"kind must be one of {sorted(SURFACE_KINDS)}, got {kind!r}")
    if model.dimension != 2:
        raise UnsupportedDimensionError(f"surface needs a 2-D model, got dimension {model.dimension}")
    grid, halfwidth, alpha = _num(params, "grid", int), _num(params, "halfwidth"), _num(params, "alpha")
    q, p = ent.grid_axes(model, halfwidth, grid)
    surf = ent.surface(model, SURFACE_KINDS[kind], q, p, alpha=alpha)
    out.write(f"# kind={kind} alpha={fmt(alpha) if kind == 'renyi' else ''} grid={grid} halfwidth={fmt(halfwidth)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["q", "p", "value"])
    for j, pv in enumerate(surf.p_axis):
        for i, qv in enumerate(surf.q_axis):
            writer.writerow([fmt(qv), fmt(pv), fmt(surf.values[j, i])])


def _entropy_row(name, est: ent.EntropyEstimate):
    return [name, fmt(est.value_nats), fmt(est.value_bits), est.method.value, fmt(est.std_error_nats), fmt(est.samples)]


def run_entropies(model, params, out) -> None:
    n, seed = _num(params, "samples", int), _num(params, "seed", int)
    n_jobs, halfwidth = _num(params, "n_jobs", int), _num(params, "halfwidth")
    grid = _num(params, "grid", int) if params["grid"] else None
    alphas = _num_list(params, "alphas")

    rows = []
    h_mc = ent.differential_entropy_mc(model, n, seed, n_jobs)
    rows.append(_entropy_row("differential", h_mc))
    if model.dimension <= 2:
        rows.append(_entropy_row("differential", ent.differential_entropy_grid(model, halfwidth, grid)))
    for alpha in alphas:
        logger.info("renyi alpha=%s", alpha)
        rows.append(_entropy_row(f"renyi_{fmt(alpha)}", ent.renyi_entropy_mc(model, alpha, n, seed, n_jobs)))
    h2 = ent.collision_entropy_closed(model)
    rows.append(_entropy_row("collision", h2))
    if model.shared_covariance:
        rows.append(_entropy_row("collision_separated", ent.collision_entropy_separated_paper(model)))
    rows.append(_entropy_row("collision_separated", ent.collision_entropy_separated(model)))
    rows.append(_entropy_row("differential_separated", ent.differential_entropy_separated(model)))
    gap = ent.EntropyEstimate(h_mc.value_nats - h2.value_nats, ent.Method.MONTE_CARLO, h_mc.std_error_nats, n)
    rows.append(_entropy_row("entropy_gap", gap))
    rows.append(_entropy_row("weight_entropy", ent.EntropyEstimate(ent.weight_entropy(model), ent.Method.CLOSED_FORM)))
    log_reff = math.log(ent.effective_rank(model))
    rows.append(_entropy_row("log_effective_rank", ent.EntropyEstimate(log_reff, ent.Method.CLOSED_FORM)))

    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["name", "value_nats", "value_bits", "method", "std_error", "samples"])
    writer.writerows(rows)


def run_gap_curve(params, out) -> None:
    d = _num(params, "dimension", int)
    threshold = _num(params, "threshold")
    curve = ent.gap_curve(d, _num(params, "r_min"), _num(params, "r_max"), _num(params, "points", int))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["r_eff", "exact_gap_bits", "approx_gap_bits", "relative_error", "threshold"])
    marked = False
    for pt in curve:
        first = not marked and pt.relative_error <= threshold
        marked = marked or first
        writer.writerow([fmt(pt.r_eff), fmt(pt.exact_gap_bits), fmt(pt.approx_gap_bits), fmt(pt.relative_error), int(first)])


def run_qkd_impact(params, out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([
        "h2", "delta", "eve_bound_log2", "degradation_ratio", "key_length_true",
        "key_length_est", "deviation_abs", "deviation_rel",
    ])
    h2 = _num(params, "h2")
    for delta in _num_list(params, "delta"):
        scenario = qkd.QkdScenario(h2, delta, _num(params, "leak"), _num(params, "eps_s"), _num(params, "eps_pa"))
        length = qkd.key_length(scenario)
        dev = qkd.key_length_deviation(scenario)
        writer.writerow([
            fmt(h2),
            fmt(delta),
            fmt(qkd.eve_success_bound(h2).log2),
            fmt(qkd.degradation_ratio(delta, h2)),
            fmt(length.margin_bits),
            fmt(length.length_bits),
            fmt(dev.absolute_bits),
            fmt(dev.relative),
        ])


def run_qkd_rate(params, out) -> None:
    points = _num(params, "points", int)
    sizes = np.geomspace(_num(params, "n_min"), _num(params, "n_max"), points)
    rate_params = qkd.RateCurveParams(
        entropy_rate_bits=_num(params, "h"),
        delta=_num(params, "delta"),
        leak_rate=_num(params, "leak_rate") if params["leak_rate"] else None,
        eps_s=_num(params, "eps_s"),
        eps_pa=_num(params, "eps_pa"),
        fs_coefficient=_num(params, "c"),
        block_sizes=sizes,
    )
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["N", "rate_true", "rate_estimated"])
    for pt in qkd.finite_key_rate_curve(rate_params):
        writer.writerow([pt.n, fmt(pt.rate_true), fmt(pt.rate_estimated)])


@contextmanager
def _open_out(path):
    if path == "-":
        yield sys.stdout
        return
    buf = io.StringIO()
    yield buf
    # only touch the destination once the data is complete
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def main(argv=None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        model_entries, params = resolve(args)
        model = build_model(parse_spec(model_entries)) if args.command in MODEL_COMMANDS else None
        with _open_out(args.out) as out:
            if args.command == "surface":
                run_surface(model, params, out)
            elif args.command == "entropies":
                run_entropies(model, params, out)
            elif args.command == "gap-curve":
                run_gap_curve(params, out)
            elif args.command == "qkd-impact":
                run_qkd_impact(params, out)
            else:
                run_qkd_rate(params, out)
    except UnsupportedDimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
