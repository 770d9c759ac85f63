"""Command-line front end: CSV ingestion, the estimate / simulate /
iss-test / sweep commands, and tabular CSV/JSON output with a JSON run
manifest next to every result file.

Input format: UTF-8 CSV with a header containing exactly the columns
``cluster_id,x,y`` (extra columns are ignored with a warning), one row
per unit.  Exit codes: 0 success, 2 validation error, 3 computation
error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import replace

from . import __version__
from ._backend import kernel_backend
from ._parallel import effective_threads
from .association import parse_measures, pearson, phi, spearman
from .data import Categorizer, ClusteredDataset, LabelRule, ThresholdRule, categorize
from .errors import ClusterDataError, CsvFormatError, EstimationError
from .iss import IssConfig, iss_test
from .simulate import (
    SimulationConfig,
    dichotomization_sweep,
    parse_split,
    run_setting,
    split_label,
    table1_grid,
)
from .weights import PAIR_SCHEMES, WeightScheme, parse_schemes

_REQUIRED_COLUMNS = ("cluster_id", "x", "y")


def _parse_float_cell(value, column, line_num):
    if value is None or value.strip() == "":
        raise CsvFormatError(f"line {line_num}: empty {column!r} cell")
    try:
        return float(value)
    except ValueError:
        raise CsvFormatError(f"line {line_num}: non-numeric {column!r} cell: {value!r}") from None


def read_table(path, extra_columns=()):
    """Parse an input CSV into per-unit records.

    Returns (cluster_ids, x, y, extras) where extras maps each requested
    extra column name to its list of raw string cells.
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CsvFormatError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, missing header 'cluster_id,x,y'") from None
        header = [h.strip() for h in header]
        for col in _REQUIRED_COLUMNS + tuple(extra_columns):
            if col not in header:
                raise CsvFormatError(f"{path}: missing required column {col!r}")
        extras_ignored = [h for h in header if h not in _REQUIRED_COLUMNS + tuple(extra_columns)]
        if extras_ignored:
            print(f"warning: ignoring extra columns {extras_ignored}", file=sys.stderr)
        idx = {col: header.index(col) for col in header}
        ids, xs, ys = [], [], []
        extras = {col: [] for col in extra_columns}
        for row in reader:
            if not row or all(cell.strip() == "" for cell in row):
                continue
            line = reader.line_num
            if len(row) < len(header):
                raise CsvFormatError(f"line {line}: expected {len(header)} cells, got {len(row)}")
            cid = row[idx["cluster_id"]].strip()
            if cid == "":
                raise CsvFormatError(f"line {line}: empty 'cluster_id' cell")
            ids.append(cid)
            xs.append(_parse_float_cell(row[idx["x"]], "x", line))
            ys.append(_parse_float_cell(row[idx["y"]], "y", line))
            for col in extra_columns:
                extras[col].append(row[idx[col]].strip())
        if not ids:
            raise CsvFormatError(f"{path}: no data rows")
    return ids, xs, ys, extras


def ingest_csv(path) -> ClusteredDataset:
    """Read an input CSV into a ClusteredDataset (rows grouped by
    cluster_id, file order preserved within each cluster)."""
    ids, xs, ys, _ = read_table(path)
    return ClusteredDataset.from_records(ids, xs, ys)


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt_full(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_sig(value, digits=4):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _write_rows(rows, columns, out_path, fmt):
    if fmt == "json":
        payload = json.dumps(rows, indent=2, sort_keys=False)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        return
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt_full(row[c]) for c in columns])
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _print_table(rows, columns):
    cells = [[_fmt_sig(row[c]) for c in columns] for row in rows]
    widths = [max(len(col), *(len(r[i]) for r in cells)) if cells else len(col) for i, col in enumerate(columns)]
    header = "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))
    print(header)
    print("  ".join("-" * w for w in widths))
    for r in cells:
        print("  ".join(r[i].ljust(widths[i]) for i in range(len(columns))))


def _emit(rows, columns, args, manifest):
    _print_table(rows, columns)
    manifest["tool_version"] = __version__
    manifest["kernel_backend"] = kernel_backend()
    manifest["wall_time_s"] = round(time.monotonic() - manifest.pop("_t0"), 3)
    out = getattr(args, "out", None)
    if out:
        fmt = getattr(args, "format", "csv")
        _write_rows(rows, columns, out, fmt)
        root, _ = os.path.splitext(out)
        with open(root + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        print(f"wrote {out}", file=sys.stderr)
    else:
        print(json.dumps(manifest), file=sys.stderr)


def _manifest_start(command, params):
    return {"command": command, "parameters": params, "_t0": time.monotonic()}


def _parse_threshold_list(text):
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ClusterDataError(f"bad threshold list {text!r}") from None


# ---------------------------------------------------------------------------
# estimate


def _estimate_categorizer(args, ids, extras):
    x_rule = y_rule = None
    if args.x_labels_col:
        x_rule = LabelRule([_parse_int_label(v, args.x_labels_col) for v in extras[args.x_labels_col]])
    elif args.x_threshold:
        x_rule = ThresholdRule(_parse_threshold_list(args.x_threshold))
    if args.y_labels_col:
        y_rule = LabelRule([_parse_int_label(v, args.y_labels_col) for v in extras[args.y_labels_col]])
    elif args.y_threshold:
        y_rule = ThresholdRule(_parse_threshold_list(args.y_threshold))
    if (x_rule is None) != (y_rule is None):
        raise ClusterDataError("categorization must be given for both margins or neither")
    if x_rule is None:
        return None
    return Categorizer(x_rule, y_rule)


def _parse_int_label(value, column):
    try:
        return int(value)
    except ValueError:
        raise CsvFormatError(f"column {column!r}: non-integer label {value!r}") from None


def cmd_estimate(args):
    measures = parse_measures(args.measure)
    schemes = parse_schemes(args.weights)
    extra_cols = tuple(c for c in (args.x_labels_col, args.y_labels_col) if c)
    ids, xs, ys, extras = read_table(args.input, extra_cols)
    raw = ClusteredDataset.from_records(ids, xs, ys)
    # label columns arrive in file order; realign them to the grouped dataset
    if extra_cols:
        import numpy as np

        first = {}
        ordinal = [first.setdefault(c, len(first)) for c in ids]
        order = np.argsort(np.asarray(ordinal), kind="stable")
        extras = {col: [vals[i] for i in order] for col, vals in extras.items()}
    categorizer = _estimate_categorizer(args, ids, extras)
    needs_cats = any(s in PAIR_SCHEMES for s in schemes)
    if needs_cats and categorizer is None:
        raise ClusterDataError(
            "pair-based weights need --x-threshold/--y-threshold or --x-labels-col/--y-labels-col"
        )
    data = categorize(raw, categorizer) if categorizer is not None else raw
    phi_cuts = None
    if "phi" in measures:
        if not args.x_threshold or not args.y_threshold:
            raise ClusterDataError("the phi measure requires --x-threshold and --y-threshold")
        tx = _parse_threshold_list(args.x_threshold)
        ty = _parse_threshold_list(args.y_threshold)
        if len(tx) != 1 or len(ty) != 1:
            raise ClusterDataError("the phi measure requires exactly one threshold per margin")
        phi_cuts = (tx[0], ty[0])

    rows = []
    for measure in measures:
        for scheme in schemes:
            try:
                if measure == "pearson":
                    est = pearson(data, scheme, args.min_cluster_size)
                elif measure == "spearman":
                    est = spearman(data, scheme, args.min_cluster_size)
                else:
                    est = phi(data, scheme, phi_cuts[0], phi_cuts[1], args.min_cluster_size)
            except EstimationError as exc:
                raise EstimationError(f"{measure}/{scheme.value}: {exc}") from exc
            rows.append(
                {
                    "measure": est.measure,
                    "scheme": est.scheme.value,
                    "estimate": est.rho_hat,
                    "se": est.se,
                    "ci_low": est.ci_low,
                    "ci_high": est.ci_high,
                    "n_clusters": est.n_clusters_used,
                    "n_units": est.n_units_used,
                }
            )
    columns = ["measure", "scheme", "estimate", "se", "ci_low", "ci_high", "n_clusters", "n_units"]
    for row in rows:
        print(f"{row['measure']:>9s} {row['scheme']:>5s}  {row['estimate']:.3f} ({row['se']:.3f})")
    params = {
        "input": args.input,
        "measure": args.measure,
        "weights": args.weights,
        "x_threshold": args.x_threshold,
        "y_threshold": args.y_threshold,
        "x_labels_col": args.x_labels_col,
        "y_labels_col": args.y_labels_col,
        "min_cluster_size": args.min_cluster_size,
    }
    manifest = _manifest_start("estimate", params)
    manifest["seed"] = None
    manifest["input_digest"] = _digest(args.input)
    _emit(rows, columns, args, manifest)


# ---------------------------------------------------------------------------
# simulate


_SIM_FLAGS = (
    # (flag, field, type)
    ("--m", "m", int),
    ("--mu-u", "mu_u", float),
    ("--mu-v", "mu_v", float),
    ("--sigma-u", "sigma_u", float),
    ("--sigma-v", "sigma_v", float),
    ("--rho-uv", "rho_uv", float),
    ("--alpha-x", "alpha_x", float),
    ("--alpha-y", "alpha_y", float),
    ("--beta-x", "beta_x", float),
    ("--beta-y", "beta_y", float),
    ("--sigma-x", "sigma_x", float),
    ("--sigma-y", "sigma_y", float),
    ("--rho-xy", "rho_xy", float),
    ("--n-k", "n_cats_x", int),
    ("--n-l", "n_cats_y", int),
    ("--eta-0", "eta_0", float),
    ("--eta-x", "eta_x", float),
    ("--eta-y", "eta_y", float),
    ("--n-max", "n_max", int),
    ("--n-min", "n_min", int),
    ("--q", "q", int),
)


def _add_sim_flags(parser):
    defaults = SimulationConfig()
    for flag, field, typ in _SIM_FLAGS:
        parser.add_argument(flag, dest=field, type=typ, default=getattr(defaults, field))
    parser.add_argument("--seed", type=int, default=None, help="base random seed")


def _config_from_args(args):
    kwargs = {field: getattr(args, field) for _, field, _ in _SIM_FLAGS}
    kwargs["seed"] = _resolve_seed(args.seed)
    return SimulationConfig(**kwargs)


def _resolve_seed(flag_value):
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get("CLUSTASSOC_SEED")
    if env:
        return int(env)
    return SimulationConfig().seed


def _resolve_threads(flag_value):
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get("CLUSTASSOC_THREADS")
    if env:
        return max(1, int(env))
    return effective_threads(None)


def _setting_row(cfg):
    return {
        "m": cfg.m,
        "rho_xy": cfg.rho_xy,
        "rho_uv": cfg.rho_uv,
        "eta_x": cfg.eta_x,
        "eta_y": cfg.eta_y,
    }


def cmd_simulate(args):
    base = _config_from_args(args)
    measures = parse_measures(args.measures)
    schemes = parse_schemes(args.weights)
    threads = _resolve_threads(args.threads)
    settings = table1_grid(base) if args.grid else (base,)
    rows = []
    for cfg in settings:
        summary = run_setting(cfg, measures=measures, schemes=schemes, threads=threads)
        for cell in summary.cells:
            row = _setting_row(cfg)
            row.update(
                {
                    "measure": cell.measure,
                    "scheme": cell.scheme.value,
                    "rho_true": summary.rho_true,
                    "rho_obs": summary.rho_obs,
                    "mean_estimate": cell.mean_estimate,
                    "coverage_true": cell.coverage_true,
                    "coverage_obs": cell.coverage_obs,
                    "n_replicates_used": cell.n_replicates_used,
                    "n_degenerate": cell.n_degenerate,
                }
            )
            rows.append(row)
    columns = [
        "m",
        "rho_xy",
        "rho_uv",
        "eta_x",
        "eta_y",
        "measure",
        "scheme",
        "rho_true",
        "rho_obs",
        "mean_estimate",
        "coverage_true",
        "coverage_obs",
        "n_replicates_used",
        "n_degenerate",
    ]
    params = {field: getattr(base, field) for _, field, _ in _SIM_FLAGS}
    params.update(
        {
            "grid": bool(args.grid),
            "n_settings": len(settings),
            "measures": args.measures,
            "weights": args.weights,
            "threads": threads,
        }
    )
    manifest = _manifest_start("simulate", params)
    manifest["seed"] = base.seed
    manifest["input_digest"] = None
    _emit(rows, columns, args, manifest)


# ---------------------------------------------------------------------------
# iss-test


def cmd_iss_test(args):
    data = ingest_csv(args.input)
    directions = ("x", "y") if args.direction == "both" else (args.direction,)
    seed = _resolve_seed(args.seed)
    threads = _resolve_threads(args.threads)
    thresholds = args.thresholds
    if thresholds.startswith("auto:"):
        thresholds_spec: object = int(thresholds.split(":", 1)[1])
    elif thresholds == "auto":
        thresholds_spec = 10
    else:
        thresholds_spec = _parse_threshold_list(thresholds)
    subset_size = None if args.subset_size in (None, 0) else int(args.subset_size)

    rows = []
    for direction in directions:
        cfg = IssConfig(
            direction=direction,
            thresholds=thresholds_spec,
            subset_size=subset_size,
            permutations=args.permutations,
            seed=seed,
        )
        report = iss_test(data, cfg, threads=threads)
        label = "Z=X" if direction == "x" else "Z=Y"
        rows.append(
            {
                "kind": "combined",
                "direction": label,
                "threshold": None,
                "subset": None,
                "n_clusters": data.n_clusters,
                "p_value": report.p_stouffer,
                "z_stouffer": report.z_stouffer,
                "n_combined": report.n_combined,
                "n_skipped": report.n_skipped,
            }
        )
        print(
            f"{label}: p_stouffer = {report.p_stouffer:.6g}  "
            f"(z = {report.z_stouffer:.4g}, components = {report.n_combined}, "
            f"skipped = {report.n_skipped})"
        )
        for comp in report.components:
            rows.append(
                {
                    "kind": "component",
                    "direction": label,
                    "threshold": comp.threshold,
                    "subset": comp.subset_index,
                    "n_clusters": comp.n_clusters,
                    "p_value": comp.p_value,
                    "z_stouffer": None,
                    "n_combined": None,
                    "n_skipped": None,
                }
            )
    columns = [
        "kind",
        "direction",
        "threshold",
        "subset",
        "n_clusters",
        "p_value",
        "z_stouffer",
        "n_combined",
        "n_skipped",
    ]
    params = {
        "input": args.input,
        "direction": args.direction,
        "thresholds": args.thresholds,
        "subset_size": subset_size,
        "permutations": args.permutations,
        "threads": threads,
    }
    manifest = _manifest_start("iss-test", params)
    manifest["seed"] = seed
    manifest["input_digest"] = _digest(args.input)
    _emit(rows, columns, args, manifest)


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args):
    base = _config_from_args(args)
    schemes = parse_schemes(args.weights)
    threads = _resolve_threads(args.threads)
    if args.x_splits:
        x_splits = tuple(parse_split(tok, base.n_cats_x) for tok in args.x_splits.split(","))
    else:
        x_splits = None
    if args.y_splits:
        y_splits = tuple(parse_split(tok, base.n_cats_y) for tok in args.y_splits.split(","))
    else:
        y_splits = None
    cells = dichotomization_sweep(
        base, args.measure, schemes=schemes, x_splits=x_splits, y_splits=y_splits, threads=threads
    )
    rows = [
        {
            "x_split": split_label(c.x_split, base.n_cats_x),
            "y_split": split_label(c.y_split, base.n_cats_y),
            "scheme": c.scheme.value,
            "mean_abs_bias": c.mean_abs_bias,
            "mc_se": c.mc_se,
            "n_replicates_used": c.n_replicates_used,
            "n_failed": c.n_failed,
        }
        for c in cells
    ]
    columns = ["x_split", "y_split", "scheme", "mean_abs_bias", "mc_se", "n_replicates_used", "n_failed"]
    params = {field: getattr(base, field) for _, field, _ in _SIM_FLAGS}
    params.update(
        {
            "measure": args.measure,
            "weights": args.weights,
            "x_splits": args.x_splits,
            "y_splits": args.y_splits,
            "threads": threads,
        }
    )
    manifest = _manifest_start("sweep", params)
    manifest["seed"] = base.seed
    manifest["input_digest"] = None
    _emit(rows, columns, args, manifest)


# ---------------------------------------------------------------------------
# parser / main


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clustassoc",
        description=(
            "Weighted marginal association (Pearson, Spearman, Phi) for clustered "
            "paired outcomes, with a clustered-data simulator and an informative "
            "subgroup size test."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="weighted association estimates from a CSV")
    p_est.add_argument("--input", required=True, help="CSV with columns cluster_id,x,y")
    p_est.add_argument("--measure", default="pearson", help="comma list of pearson,spearman,phi")
    p_est.add_argument("--weights", default="none,cw,ppw,opw,mopw", help="comma list of schemes")
    p_est.add_argument("--x-threshold", default=None, help="comma list of x cutpoints (categories for weighting; phi uses a single cut)")
    p_est.add_argument("--y-threshold", default=None, help="comma list of y cutpoints")
    p_est.add_argument("--x-labels-col", default=None, help="CSV column with precomputed x categories")
    p_est.add_argument("--y-labels-col", default=None, help="CSV column with precomputed y categories")
    p_est.add_argument("--min-cluster-size", type=int, default=2)
    p_est.add_argument("--out", default=None)
    p_est.add_argument("--format", choices=("csv", "json"), default="csv")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study of the estimators")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--grid", action="store_true", help="run the full varied-parameter factorial")
    p_sim.add_argument("--measures", default="pearson,spearman,phi")
    p_sim.add_argument("--weights", default="cw,ppw,opw,mopw")
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_iss = sub.add_parser("iss-test", help="informative subgroup size test on a CSV")
    p_iss.add_argument("--input", required=True)
    p_iss.add_argument("--direction", choices=("x", "y", "both"), default="both")
    p_iss.add_argument(
        "--thresholds",
        default="auto:10",
        help="auto:T for T data-driven cutpoints, or an explicit comma list",
    )
    p_iss.add_argument("--subset-size", type=int, default=10, help="clusters per subset (0 = one subset)")
    p_iss.add_argument("--permutations", type=int, default=100)
    p_iss.add_argument("--seed", type=int, default=None)
    p_iss.add_argument("--threads", type=int, default=None)
    p_iss.add_argument("--out", default=None)
    p_iss.add_argument("--format", choices=("csv", "json"), default="csv")
    p_iss.set_defaults(func=cmd_iss_test)

    p_swp = sub.add_parser("sweep", help="dichotomization sweep of mean absolute bias")
    _add_sim_flags(p_swp)
    p_swp.add_argument("--measure", default="pearson")
    p_swp.add_argument("--weights", default="none,cw,ppw,opw,mopw")
    p_swp.add_argument("--x-splits", default=None, help="comma list like 1-2|3-5,1-3|4-5,severity")
    p_swp.add_argument("--y-splits", default=None)
    p_swp.add_argument("--threads", type=int, default=None)
    p_swp.add_argument("--out", default=None)
    p_swp.add_argument("--format", choices=("csv", "json"), default="csv")
    p_swp.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        args.func(args)
    except ClusterDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
