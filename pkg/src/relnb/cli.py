"""Command-line entry point.

Exit status: 0 on success, 1 on usage or parameter errors, 2 on data errors.
Reports go to files (or stdout); progress and warnings go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .aggregates import FlatTable, flatten, generate_aggregates, write_flat_table, write_specs
from .classifier import positive_class
from .counterfactual import AlterabilityConfig, find_all, read_alterable, write_trajectories
from .discretize import filter_informative, write_evaluation_report
from .errors import DataError, ModelFormatError, ParameterError
from .explain import class_index, reference_class, report_top_k, shapley_baseline, write_full_matrix, write_top_k
from .harness import CVConfig, SynthConfig, fit_pipeline, generate_synthetic, run_cv
from .persist import load_model, save_model
from .schema import (
    WindowSpec, apply_window, load_dataset, load_schema, schema_hash, validate, write_dataset,
)

log = logging.getLogger("relnb")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _data_flags(p, window=True):
    p.add_argument("--root", required=True, help="root table (one row per individual)")
    p.add_argument("--secondary", required=True, help="secondary table (timestamped rows)")
    p.add_argument("--schema", required=True, help="JSON schema of both tables")
    if window:
        p.add_argument("--p", type=int, default=None, help="keep at most this many rows per individual")
        p.add_argument("--horizon", type=float, default=0.0, help="prediction horizon h (rows with t <= -h)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relnb", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="only warnings on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="load the tables and report missingness")
    _data_flags(p, window=False)
    p.add_argument("--missing-threshold", type=float, default=0.20)
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("synth", help="write a planted-signal synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=6)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--shift", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--missing", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("flatten", help="construct aggregates and write the flat table")
    _data_flags(p)
    p.add_argument("--q", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="fit the pipeline on all rows and save the model")
    _data_flags(p)
    p.add_argument("--q", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="model file")

    p = sub.add_parser("evaluate", help="k-fold cross-validation report")
    _data_flags(p)
    p.add_argument("--q", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("explain", help="top-k Shapley report for every individual")
    _data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--class", dest="target", default=None, help="explained class (default: positive)")
    p.add_argument("--full-matrix", default=None, help="also write every Shapley value here")
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("counterfactual", help="greedy counterfactual trajectories")
    _data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--alterable", default=None, help="file listing alterable variables, one per line")
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--target-class", default=None, help="skip individuals already predicted in this class")
    p.add_argument("--out", help="JSON-lines path (default: stdout)")
    return parser


def _load(args, window: WindowSpec | None = None):
    schema = load_schema(args.schema)
    ds = load_dataset(args.root, args.secondary, schema)
    if window is not None:
        ds = apply_window(ds, window)
    return ds, schema


def _window(args) -> WindowSpec | None:
    return None if args.p is None else WindowSpec(args.p, args.horizon)


def _model_window(args, model) -> WindowSpec | None:
    if args.p is not None:
        return WindowSpec(args.p, args.horizon)
    w = model.metadata.get("window")
    return None if w is None else WindowSpec(w["p"], w["h"])


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _to_out(out, writer) -> None:
    """Run ``writer(path)`` on ``out`` or on a temporary file copied to stdout."""
    if out:
        writer(out)
        return
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "report"
        writer(path)
        sys.stdout.write(path.read_text())


def cmd_validate(args) -> None:
    ds, _ = _load(args)
    _emit(validate(ds, args.missing_threshold).to_text(), args.out)


def cmd_synth(args) -> None:
    cfg = SynthConfig(args.n, args.p, args.d, args.shift, 0, args.noise, args.missing)
    ds = generate_synthetic(cfg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "root.tsv", out / "secondary.tsv", out / "schema.json")
    log.info("wrote %d individuals and %d rows to %s", ds.n, ds.m, out)


def cmd_flatten(args) -> None:
    ds, _ = _load(args, _window(args))
    specs = generate_aggregates(ds, args.q, args.seed)
    flat = flatten(ds, specs)
    _, evals = filter_informative(flat, threads=_threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = ds.root_schema.names("target")[0]
    write_flat_table(flat, out / "flat.tsv", target)
    write_specs(specs, out / "aggregates.json")
    write_evaluation_report(evals, out / "evaluations.tsv")
    log.info("Q=%d R=%d", len(specs), sum(e.cg > 0 for e in evals))


def cmd_train(args) -> None:
    window = _window(args)
    ds, schema = _load(args, window)
    fitted = fit_pipeline(ds, args.q, args.seed, threads=_threads(args))
    model = fitted.model
    flat = fitted.flatten(ds)
    baselines = {}
    for z, name in enumerate(model.classes):
        z0 = reference_class(model, z)
        baselines[name] = shapley_baseline(model, flat, z, z0).tolist()
    model.metadata.update({
        "schema_hash": schema_hash(*schema),
        "window": None if window is None else {"p": window.p, "h": window.h},
        "baselines": baselines,
    })
    save_model(model, args.out)
    Q, R, S = model.funnel
    log.info("trained on %d individuals: Q=%d R=%d S=%d", ds.n, Q, R, S)


def cmd_evaluate(args) -> None:
    ds, _ = _load(args)
    cfg = CVConfig(folds=args.folds, seed=args.seed, q=args.q, window=_window(args), threads=_threads(args))
    report = run_cv(ds, cfg)
    _to_out(args.out, report.write)
    log.info("mean test AUC %.4f", report.mean("auc_test"))


def _model_and_data(args):
    model = load_model(args.model)
    schema = load_schema(args.schema)
    expected = model.metadata.get("schema_hash")
    if expected is not None and expected != schema_hash(*schema):
        raise DataError("schema does not match the one the model was trained with")
    ds = load_dataset(args.root, args.secondary, schema)
    window = _model_window(args, model)
    if window is not None:
        ds = apply_window(ds, window)
    specs = [v.spec for v in model.variables]
    if any(s is None for s in specs):
        raise ModelFormatError("model variables lack aggregate definitions")
    if specs:
        flat = flatten(ds, specs)
    else:
        flat = FlatTable(ds.keys, ds.labels, (), np.zeros((ds.n, 0)))
    return model, flat


def cmd_explain(args) -> None:
    if args.top_k < 1:
        raise UsageError("--top-k must be at least 1")
    model, flat = _model_and_data(args)
    z = class_index(model, positive_class(model.classes) if args.target is None else args.target)
    stored = model.metadata.get("baselines", {}).get(model.classes[z])
    base = np.array(stored) if stored is not None else shapley_baseline(model, flat, z)
    k = min(args.top_k, len(model.selected))
    if k < args.top_k:
        log.warning("top-k %d exceeds the %d selected variables; using %d", args.top_k, k, k)
    records = report_top_k(model, flat, max(k, 1), base, z)
    _to_out(args.out, lambda path: write_top_k(records, path, model.classes[z], k))
    if args.full_matrix:
        write_full_matrix(model, flat, flat, args.full_matrix)


def cmd_counterfactual(args) -> None:
    model, flat = _model_and_data(args)
    alterable = read_alterable(args.alterable) if args.alterable else None
    cfg = AlterabilityConfig(alterable, args.max_steps, target_class=args.target_class)
    trajectories = find_all(model, flat, flat.keys, cfg)
    _to_out(args.out, lambda path: write_trajectories(trajectories, path))
    flipped = sum(t.outcome == "flipped" for t in trajectories)
    log.info("%d of %d individuals flipped", flipped, len(trajectories))


COMMANDS = {
    "validate": cmd_validate, "synth": cmd_synth, "flatten": cmd_flatten, "train": cmd_train,
    "evaluate": cmd_evaluate, "explain": cmd_explain, "counterfactual": cmd_counterfactual,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"relnb {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ModelFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"relnb {args.command}: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
