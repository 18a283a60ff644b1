"""Batch driver: inspect data, dump clusterings, train and score single models,
and run full 5x2 comparisons with text and delimited reports.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .clustering import cluster_stats, leader2
from .dataset import (
    DataError,
    Dataset,
    SchemaError,
    derive_task,
    horse_colic_files,
    horse_colic_schema,
    load_dataset,
    load_schema,
    make_fold_plan,
    predictor_missing_fraction,
)
from .evaluation import (
    compute_metrics,
    format_delimited,
    format_text,
    metrics_rows,
    run_5x2,
    significance_results,
    significance_rows,
)
from .models.io import ModelFormatError, load_model, save_model, write_atomic
from .models.rbf import RBF2, RBFK, RBFConfig, train_rbf
from .models.snn import S_MIN_GRID, SNNConfig, train_snn
from .similarity import SimilarityConfig, fit_similarity_model, similarity_matrix

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2
BUILTIN_SCHEMA = "horse-colic"
METHOD_NAMES = ("SNN", RBF2, RBFK)
SIMILARITY_KEYS = ("nominal_mode", "exponent", "alpha", "beta", "missing_policy", "epsilon")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """One method entry; ``name`` labels it in reports and defaults to ``method``."""

    method: str
    name: str = ""
    s_min: float | None = None
    k: int | None = None
    similarity: dict = field(default_factory=dict)
    sigma_factor: float = 1.0
    penalize_bias: bool = False

    @property
    def label(self) -> str:
        return self.name or self.method


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "HC24"
    methods: tuple[MethodSpec, ...] = ()
    seed: int = 0
    data: tuple[str, ...] = ()
    schema: str = BUILTIN_SCHEMA

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"] = list(self.data)
        return d


def _method_from_dict(d) -> MethodSpec:
    if isinstance(d, str):
        d = {"method": d}
    if not isinstance(d, dict) or "method" not in d:
        raise ConfigError(f"method entry needs a 'method' field: {d!r}")
    unknown = set(d) - {f for f in MethodSpec.__dataclass_fields__}
    if unknown:
        raise ConfigError(f"unknown method fields {sorted(unknown)}")
    spec = MethodSpec(**d)
    if spec.method not in METHOD_NAMES:
        raise ConfigError(f"unknown method {spec.method!r}; choose from {', '.join(METHOD_NAMES)}")
    bad = set(spec.similarity) - set(SIMILARITY_KEYS)
    if bad:
        raise ConfigError(f"unknown similarity options {sorted(bad)}")
    try:
        SimilarityConfig(**spec.similarity)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{spec.label}: {exc}") from None
    if spec.s_min is not None and not 0 <= spec.s_min <= 1:
        raise ConfigError(f"{spec.label}: s_min must lie in [0, 1]")
    if spec.k is not None and (not isinstance(spec.k, int) or spec.k < 1):
        raise ConfigError(f"{spec.label}: k must be a positive integer")
    return spec


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config; a run manifest is accepted too (its ``config`` block is used)."""
    if d.get("format") == "simnn-manifest":
        d = d["config"]
    unknown = set(d) - {f for f in ExperimentConfig.__dataclass_fields__}
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    data = d.get("data") or ()
    if isinstance(data, str):
        data = (data,)
    return ExperimentConfig(
        task=str(d.get("task", "HC24")),
        methods=tuple(_method_from_dict(m) for m in d.get("methods", ())),
        seed=seed,
        data=tuple(str(x) for x in data),
        schema=str(d.get("schema", BUILTIN_SCHEMA)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def validate(config: ExperimentConfig) -> None:
    if not config.methods:
        raise ConfigError("no methods configured")
    labels = [m.label for m in config.methods]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"method labels must be unique: {labels}")


# --------------------------------------------------------------------------
# Data and methods
# --------------------------------------------------------------------------


def _schema(source: str):
    return horse_colic_schema() if source == BUILTIN_SCHEMA else load_schema(source)


def _files(config_data: Sequence[str], schema_source: str) -> list[Path]:
    if config_data:
        return [Path(f) for f in config_data]
    if schema_source != BUILTIN_SCHEMA:
        raise ConfigError("data files are required with a custom schema")
    return horse_colic_files()


def load_inputs(data: Sequence[str], schema_source: str) -> tuple[Dataset, list[Path]]:
    files = _files(data, schema_source)
    for f in files:
        if not f.is_file():
            raise ConfigError(f"data file not found: {f}")
    return load_dataset(files, _schema(schema_source)), files


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def make_trainer(spec: MethodSpec):
    sim = SimilarityConfig(**spec.similarity)
    if spec.method == "SNN":
        cfg = SNNConfig(similarity=sim, s_min=spec.s_min, penalize_bias=spec.penalize_bias)
        return lambda train, seed: train_snn(train, cfg)
    variant = spec.method
    base = RBFConfig(
        variant=variant,
        k=spec.k,
        s_min=spec.s_min,
        similarity=sim,
        sigma_factor=spec.sigma_factor,
        penalize_bias=spec.penalize_bias,
    )
    return lambda train, seed: train_rbf(train, replace(base, seed=seed))


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig, out_dir: str | Path, log=None) -> int:
    """Full 5x2 comparison; writes tables and a manifest into ``out_dir``.

    Returns the exit status: failed cells still produce reports, marked
    ``partial`` in the manifest and ``NA`` in the tables, with status 2.
    """
    validate(config)
    data, files = load_inputs(config.data, config.schema)
    task = derive_task(data, config.task)
    plan = make_fold_plan(task, config.seed)
    methods = {m.label: make_trainer(m) for m in config.methods}

    def on_cell(name, i, j, met):
        if log is not None:
            status = "failed" if met is None else f"error {met.error_pct:.2f}%  mse {met.mse:.4f}"
            log(f"{name:>6}  replication {i + 1} fold {j + 1}: {status}")

    report = run_5x2(methods, task, plan, on_cell)
    partial = any(report.failures[m] for m in report.methods)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mrows = metrics_rows(report)
    srows = significance_rows(report)
    note = f"# task {config.task}, seed {config.seed}; NRMSE pools squared error over outputs against test-fold target means\n"
    if partial:
        note += "# PARTIAL: some cells failed, see manifest.json\n"
    sig_note = f"# statistic per test; * marks significance (t > 2.571, F > 4.74); differences are other minus {report.methods[0]}\n"
    write_atomic(out / "metrics.txt", note + format_text(mrows))
    write_atomic(out / "metrics.tsv", format_delimited(mrows))
    write_atomic(out / "significance.txt", note + sig_note + format_text(srows))
    write_atomic(out / "significance.tsv", format_delimited(srows))
    manifest = {
        "format": "simnn-manifest",
        "version": 1,
        "software": {"simnn": __version__},
        "status": "partial" if partial else "complete",
        "config": config.to_dict(),
        "seed": config.seed,
        "data": [{"file": f.name, "sha256": sha256(f)} for f in files],
        "examples": len(task),
        "folds": plan.to_dict()["replications"],
        "results": report.to_dict(),
        "tests": significance_results(report),
    }
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True, allow_nan=False) + "\n")
    if log is not None:
        log("")
        log(format_text(mrows).rstrip())
        log("")
        log(format_text(srows).rstrip())
    return EXIT_FAILURE if partial else EXIT_OK


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _echo(msg: str = "") -> None:
    print(msg, flush=True)


def _similarity_overrides(args) -> dict:
    out = {}
    for key in SIMILARITY_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def cmd_inspect(args) -> int:
    data, files = load_inputs(args.data, args.schema)
    schema = data.schema
    miss = data.missing.mean(axis=0)
    rows = [["Variable", "Column", "Kind", "Role", "Levels", "Missing"]]
    for k, v in enumerate(schema):
        rows.append([v.name, str(v.column), v.kind.value, v.role.value, str(v.n_levels) if v.is_discrete else "-", f"{100 * miss[k]:.1f}%"])
    counts = schema.kind_counts()
    summary = {
        "examples": len(data),
        "columns": schema.n_columns,
        "predictors": len(schema.predictors),
        "predictor_kinds": counts,
        "predictor_missing_fraction": predictor_missing_fraction(data),
        "cell_missing_fraction": float(data.missing.mean()),
        "files": [{"file": str(f), "sha256": sha256(f)} for f in files],
    }
    if args.json:
        _echo(json.dumps(summary, indent=1))
        return EXIT_OK
    _echo(f"{len(data)} examples, {schema.n_columns} columns, {len(schema.predictors)} predictors")
    _echo("predictor kinds: " + ", ".join(f"{n} {k}" for k, n in counts.items() if n))
    _echo(f"missing: {100 * summary['predictor_missing_fraction']:.1f}% of predictor cells, "
          f"{100 * summary['cell_missing_fraction']:.1f}% of all cells")
    _echo()
    _echo((format_delimited(rows) if args.tsv else format_text(rows)).rstrip())
    return EXIT_OK


def cmd_cluster(args) -> int:
    if not 0 <= args.s_min <= 1:
        raise ConfigError(f"s_min must lie in [0, 1], got {args.s_min}")
    data, _ = load_inputs(args.data, args.schema)
    if args.task:
        data = derive_task(data, args.task)
    model = fit_similarity_model(data, SimilarityConfig(**_similarity_overrides(args)))
    S = similarity_matrix(model, data)
    c = leader2(S, len(S), args.s_min)
    text = c.dump()
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    stats = cluster_stats(S, c)
    print(f"{c.n_clusters} clusters over {len(data)} examples at s_min={args.s_min}; "
          f"mean size {stats.mean_size:.2f}, mean compactness {stats.mean_compactness:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    data, files = load_inputs(args.data, args.schema)
    task = derive_task(data, args.task)
    spec = _method_from_dict({
        "method": args.method, "s_min": args.s_min, "k": args.k, "similarity": _similarity_overrides(args),
    })
    model = make_trainer(spec)(task, args.seed)
    meta = {
        "task": args.task,
        "seed": args.seed,
        "data": [{"file": f.name, "sha256": sha256(f)} for f in files],
        "software": {"simnn": __version__},
    }
    save_model(args.output, model, meta)
    outputs, classes = model.predict(task)
    met = compute_metrics(outputs, classes, task.target_matrix(), task.target_classes())
    print(f"{args.method}: {json.dumps(model.summary())}", file=sys.stderr)
    print(f"training error {met.error_pct:.2f}%, mse {met.mse:.4f}; model written to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    schema = model.similarity.schema if hasattr(model, "similarity") else model.encoder.schema
    files = [Path(f) for f in args.data]
    for f in files:
        if not f.is_file():
            raise ConfigError(f"data file not found: {f}")
    data = load_dataset(files, schema)
    outputs, classes = model.predict(data)
    rows = [["row", "class"] + [f"out_{c}" for c in model.classes]]
    for i, (o, c) in enumerate(zip(outputs, classes)):
        rows.append([str(i), model.classes[c]] + [repr(float(x)) for x in o])
    text = format_delimited(rows)
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    t = data.target_index
    known = ~np.isnan(data.values[:, t])
    if known.any():
        sub = data.subset(np.flatnonzero(known))
        met = compute_metrics(outputs[known], classes[known], sub.target_matrix(), sub.target_classes())
        print(f"{int(known.sum())} labelled rows: error {met.error_pct:.2f}%, mse {met.mse:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.task is not None:
        config = replace(config, task=args.task)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.data:
        config = replace(config, data=tuple(args.data))
    if args.schema is not None:
        config = replace(config, schema=args.schema)
    if args.methods is not None:
        names = [m for m in args.methods.split(",") if m]
        config = replace(config, methods=tuple(_method_from_dict(m) for m in names))
    elif not config.methods and not args.config:
        config = replace(config, methods=tuple(MethodSpec(m) for m in METHOD_NAMES))
    if args.s_min is not None or args.k is not None:
        config = replace(config, methods=tuple(
            replace(m, s_min=args.s_min if args.s_min is not None and m.method != RBFK else m.s_min,
                    k=args.k if args.k is not None and m.method == RBFK else m.k)
            for m in config.methods))
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    return run_experiment(config, args.output_dir, log)


def _add_data_args(p, task: bool = True, task_required: bool = False):
    p.add_argument("--data", nargs="+", default=[], metavar="FILE", help="raw data files (default: shipped Horse Colic)")
    p.add_argument("--schema", default=BUILTIN_SCHEMA, help=f"schema descriptor path or {BUILTIN_SCHEMA!r}")
    if task:
        p.add_argument("--task", default="HC24" if task_required else None, help="HC23, HC24 or a target variable name")


def _add_similarity_args(p):
    p.add_argument("--nominal-mode", dest="nominal_mode", choices=("overlap", "frequency"))
    p.add_argument("--exponent", type=float, help="normalisation exponent a")
    p.add_argument("--missing-policy", dest="missing_policy", choices=("midpoint", "gower"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simnn", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"simnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="per-variable summary of a dataset")
    _add_data_args(p, task=False)
    p.add_argument("--json", action="store_true", help="machine-readable summary only")
    p.add_argument("--tsv", action="store_true", help="tab-delimited variable table")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("cluster", help="Leader 2 clustering dump at one threshold")
    _add_data_args(p)
    p.add_argument("--s-min", dest="s_min", type=float, required=True)
    p.add_argument("--output", help="write the dump here instead of stdout")
    _add_similarity_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train one model on a whole task and save it")
    _add_data_args(p, task_required=True)
    p.add_argument("--method", choices=METHOD_NAMES, default="SNN")
    p.add_argument("--s-min", dest="s_min", type=float, help=f"fixed threshold (default: GCV over {S_MIN_GRID})")
    p.add_argument("--k", type=int, help="RBFk centre count (default: GCV over a grid)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="model file to write")
    _add_similarity_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score raw files with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", nargs="+", required=True, metavar="FILE")
    p.add_argument("--output", help="write predictions here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", help="5x2 cross-validated comparison with significance tests")
    p.add_argument("--config", help="JSON experiment config or a previous manifest.json")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--task")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", nargs="+", metavar="FILE")
    p.add_argument("--schema")
    p.add_argument("--methods", help="comma-separated list, e.g. SNN,RBF2,RBFk")
    p.add_argument("--s-min", dest="s_min", type=float, help="fixed s_min for SNN and RBF2")
    p.add_argument("--k", type=int, help="fixed k for RBFk")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, DataError, ModelFormatError, FileNotFoundError, KeyError) as exc:
        print(f"simnn: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"simnn: failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
