"""Command-line interface: ``tsclean <decompose|impute|detect|clean|bench> ...``.

Option precedence is flags, then environment (``TSCLEAN_OUTPUT_DIR``,
``TSCLEAN_THREADS``), then a ``--config`` file, then built-in defaults.

The config file holds ``key = value`` lines whose keys are the long flag
names with dashes or underscores (``seed = 7``, ``taus = 0.25,0.5,0.75``);
``#`` starts a comment.

Exit codes: 0 success, 1 usage error, 2 partial failure (a column was left
uncleaned), 3 data error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bench import METHODS, StudyConfig, run_study, summarize
from .decompose import robust_decompose
from .frame import (IngestionError, MissingSpec, SeriesFrame, format_tau, load_csv, write_csv,
                    write_matrix)
from .missing import model_missing_data
from .outliers import FAMILIES, FEATURE_NAMES, DetectOptions, detect_outliers
from .pipeline import auto_data_cleaning, write_report

log = logging.getLogger("tsclean")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_DATA = 0, 1, 2, 3
ENV_OUTPUT_DIR = "TSCLEAN_OUTPUT_DIR"
ENV_THREADS = "TSCLEAN_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 2 for v in values):
        raise argparse.ArgumentTypeError(f"seasonalities must be at least 2, got {text!r}")
    return values


def _unit_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or any(not 0.0 < v < 1.0 for v in values):
        raise argparse.ArgumentTypeError(f"every value must lie in (0, 1), got {text!r}")
    return values


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV file: timestamp column followed by one column per series")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--s", dest="seasonalities", type=_int_list, default=(48,),
                   help="comma-separated seasonal periods, primary first (default: 48)")
    p.add_argument("--cols", type=_str_list, default=None, help="series to load (default: all)")
    p.add_argument("--na-values", type=_float_list, default=(),
                   help="values that encode missing observations")
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--config", default=None, help="key = value file with option defaults")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _model_flags(p):
    p.add_argument("--recursive", type=_bool, default=True,
                   help="feed median predictions back as lags (default: true)")
    p.add_argument("--no-recursive", dest="recursive", action="store_false",
                   help="same as --recursive false")
    p.add_argument("--rho-min", type=float, default=0.6,
                   help="correlation threshold for external regressors")
    p.add_argument("--lags", type=lambda s: tuple(int(v) for v in s.split(",")), default=None,
                   help="explicit lag set, e.g. -1,1,48")


def _detect_flags(p):
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--subsets", type=int, default=10)
    p.add_argument("--subset-size", type=int, default=5000)
    p.add_argument("--g-max", type=int, default=5)
    p.add_argument("--families", type=_str_list, default=FAMILIES)
    p.add_argument("--alpha", type=float, default=0.05, help="share of synthetic outliers")
    p.add_argument("--c", type=float, default=25.0, help="covariance inflation of the synthetic outliers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsclean", description="Robust cleaning of seasonal time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="trend / seasonal / remainder decomposition")
    _common(p)
    p.add_argument("--col", default=None, help="series to decompose (default: first)")
    p.add_argument("--iters", type=int, default=2, help="trend / seasonal / external passes")

    p = sub.add_parser("impute", help="model and impute missing values")
    _common(p)
    _model_flags(p)
    p.add_argument("--taus", type=_unit_list, default=(0.5,), help="quantile levels")
    p.add_argument("--col", type=_str_list, default=None, help="series to impute (default: all)")

    p = sub.add_parser("detect", help="outlier probabilities of a complete series")
    _common(p)
    _detect_flags(p)
    p.add_argument("--col", default=None)
    p.add_argument("--s1", type=int, default=None, help="primary seasonality (default: first of --s)")
    p.add_argument("--features-csv", type=_bool, default=False, help="also write the feature matrix")

    p = sub.add_parser("clean", help="impute, detect outliers and remodel")
    _common(p)
    _model_flags(p)
    _detect_flags(p)
    p.add_argument("--taus", type=_unit_list, default=(0.5,))
    p.add_argument("--abort-share", type=float, default=0.5)

    p = sub.add_parser("bench", help="imputation study with block-wise masking")
    _common(p)
    p.add_argument("--col", default=None)
    p.add_argument("--shares", type=_unit_list, default=(0.01, 0.05, 0.1, 0.2, 0.5))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--block-mean", type=float, default=12.0)
    p.add_argument("--block-sd", type=float, default=6.0)
    p.add_argument("--methods", type=_str_list, default=("model", "linear", "locf", "seasonal_median"),
                   help=f"any of {', '.join(sorted(METHODS))}")
    p.add_argument("--timing", type=_bool, default=False,
                   help="also write wall-clock seconds (not reproducible)")
    return parser


def _read_config(path) -> dict:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.read_string("[options]\n" + text)
    aliases = {"s": "seasonalities"}
    out = {}
    for key, value in cp["options"].items():
        key = key.replace("-", "_")
        out[aliases.get(key, key)] = value
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    defaults = {}
    if args.config:
        defaults.update(_read_config(args.config))
    if os.environ.get(ENV_OUTPUT_DIR):
        defaults["out"] = os.environ[ENV_OUTPUT_DIR]
    if os.environ.get(ENV_THREADS):
        defaults["threads"] = os.environ[ENV_THREADS]
    if defaults:
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise UsageError(f"tsclean: error: unknown config keys {unknown}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _load(args) -> SeriesFrame:
    spec = MissingSpec(sentinel_values=tuple(args.na_values)) if args.na_values else None
    return load_csv(args.input, seasonalities=args.seasonalities, missing_spec=spec, columns=args.cols)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.ndarray, tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _echo(args) -> dict:
    # execution settings that cannot change results stay out of the reports
    return {k: v for k, v in sorted(vars(args).items()) if k not in {"out", "config", "threads", "log_level"}}


def _model_options(args) -> dict:
    opts = {"recursive": args.recursive, "rho_min": args.rho_min}
    if args.lags:
        opts["lag_set"] = args.lags
    return opts


def _detect_options(args) -> DetectOptions:
    return DetectOptions(G_max=args.g_max, families=tuple(args.families), subsets=args.subsets,
                         subset_size=args.subset_size, alpha=args.alpha, c=args.c,
                         threshold=args.threshold, seed=args.seed, threads=args.threads)


def cmd_decompose(args, out: Path) -> int:
    frame = _load(args)
    col = args.col if args.col is not None else 0
    if args.iters < 1:
        raise UsageError("--iters must be at least 1")
    dec = robust_decompose(frame, col, iterations=args.iters)
    table = pd.DataFrame(dec.components_matrix, columns=dec.component_names)
    table.insert(0, "y", dec.y)
    table["remainder"] = dec.remainder
    result = SeriesFrame.from_array(table.to_numpy(), names=tuple(table.columns),
                                    timestamps=frame.timestamps)
    write_csv(result, out / "decomposition.csv")
    return EXIT_OK


def cmd_impute(args, out: Path) -> int:
    frame = _load(args)
    targets = list(args.col) if args.col else list(frame.names)
    unknown = [c for c in targets if c not in frame.names]
    if unknown:
        raise UsageError(f"unknown --col: {', '.join(unknown)}")
    cols = [frame.names.index(c) for c in targets]
    imputed = {tau: np.array(frame.values[:, cols], dtype=float) for tau in args.taus}
    report = {"options": _echo(args), "columns": {}}
    for i, j in enumerate(cols):
        others = [k for k in range(frame.m) if k != j]
        X = frame.values[:, others] if others else None
        model, rep = model_missing_data(frame, j, taus=args.taus, externals=X, **_model_options(args))
        for tau in args.taus:
            imputed[tau][rep.indices, i] = rep.values[tau]
        report["columns"][frame.names[j]] = {
            "n_missing": len(rep),
            "lags": list(model.lag_set.lags),
            "selected_externals": [[frame.names[others[k]], lag] for k, lag in model.selected_externals],
            "regressors": model.regressor_names,
            "provenance": {str(t): notes for t, notes in sorted(rep.provenance.items())},
        }
    header = list(frame.names)
    blocks = [np.asarray(frame.values, dtype=float)]
    for tau in sorted(imputed):
        header += [f"{name}_imputed_q{format_tau(tau)}" for name in targets]
        blocks.append(imputed[tau])
    write_matrix(out / "imputed.csv", frame.timestamps, header, np.hstack(blocks),
                 frame.timestamps.name or "timestamp")
    _write_json(out / "impute_report.json", report)
    return EXIT_OK


def cmd_detect(args, out: Path) -> int:
    frame = _load(args)
    col = args.col if args.col is not None else 0
    rep = detect_outliers(frame, col, S1=args.s1, options=_detect_options(args))
    _write_json(out / "outliers.json", {"options": _echo(args), **rep.to_dict()})
    if args.features_csv:
        F = rep.features
        feats = SeriesFrame.from_array(F.raw, names=FEATURE_NAMES, timestamps=frame.timestamps)
        write_csv(feats, out / "features.csv")
    return EXIT_OK


def cmd_clean(args, out: Path) -> int:
    frame = _load(args)
    result = auto_data_cleaning(frame, taus=args.taus, detect_options=_detect_options(args),
                                model_options=_model_options(args), abort_share=args.abort_share,
                                seed=args.seed)
    result.options_echo["cli"] = _echo(args)
    write_report(result, out)
    for name, diag in result.aborted.items():
        log.warning("column %s left unmodified: %s", name, diag)
    return EXIT_PARTIAL if result.aborted else EXIT_OK


def cmd_bench(args, out: Path) -> int:
    frame = _load(args)
    config = StudyConfig(shares=args.shares, repetitions=args.reps, block_mean=args.block_mean,
                         block_sd=args.block_sd, seed=args.seed if args.seed is not None else 1,
                         methods=tuple(args.methods), threads=args.threads)
    col = args.col if args.col is not None else 0
    table = run_study(frame, config, col=col)
    summarize(table, "mae").to_csv(out / "bench_mae.csv")
    table.drop(columns="seconds").to_csv(out / "bench_runs.csv", index=False)
    if args.timing:
        summarize(table, "seconds").to_csv(out / "bench_seconds.csv")
    failed = table["error"].astype(bool)
    if failed.any():
        log.warning("%d method runs failed; see bench_runs.csv", int(failed.sum()))
    return EXIT_OK


COMMANDS = {
    "decompose": cmd_decompose,
    "impute": cmd_impute,
    "detect": cmd_detect,
    "clean": cmd_clean,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        sys.stderr.write(f"tsclean: error: {exc}\n")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        sys.stderr.write(f"tsclean: data error: {exc}\n")
        return EXIT_DATA
    except (IngestionError, ValueError, KeyError) as exc:
        sys.stderr.write(f"tsclean: data error: {exc}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
