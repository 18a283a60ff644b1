"""Test-fold metrics, the 5x2 cross-validation driver and paired significance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Dataset, FoldPlan

T_THRESHOLD = 2.571
F_THRESHOLD = 4.74
METRICS = ("error_pct", "mse", "nrmse")


class ZeroVariance(ValueError):
    """Every replication variance is zero, so the statistic is undefined."""


class IncompleteCells(ValueError):
    """A paired test needs all ten estimates for both methods."""


@dataclass(frozen=True)
class Metrics:
    error_pct: float
    mse: float
    nrmse: float | None

    def get(self, name: str) -> float | None:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {"error_pct": self.error_pct, "mse": self.mse, "nrmse": self.nrmse}


def compute_metrics(outputs, predicted, targets, true) -> Metrics:
    """Error rate, MSE over examples and outputs, and pooled NRMSE.

    NRMSE divides the summed squared error by the summed squared deviation of
    the targets from their test-fold means; it is ``None`` when that is zero.
    """
    F = np.asarray(outputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    pred = np.asarray(predicted)
    true = np.asarray(true)
    if F.ndim == 1:
        F = F[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if F.shape != Y.shape or len(pred) != len(F) or len(true) != len(F):
        raise ValueError("outputs, targets and class vectors have inconsistent shapes")
    if len(F) == 0:
        raise ValueError("need at least one example")
    sse = float(np.sum((F - Y) ** 2))
    sst = float(np.sum((Y - Y.mean(axis=0)) ** 2))
    return Metrics(
        error_pct=100.0 * float(np.mean(pred != true)),
        mse=sse / Y.size,
        nrmse=math.sqrt(sse / sst) if sst > 0 else None,
    )


# --------------------------------------------------------------------------
# 5x2 CV
# --------------------------------------------------------------------------

# a method maps (training fold, cell seed) to anything with predict(Dataset) -> (outputs, classes)
Method = Callable[[Dataset, int], object]


def cell_seed(seed: int, replication: int, orientation: int) -> int:
    """Independent per-cell seed, so results never depend on execution order."""
    return int(np.random.SeedSequence([seed, replication, orientation]).generate_state(1)[0])


@dataclass
class CVReport:
    """Ten estimates per method and metric, laid out as ``[replication, orientation]``.

    Failed cells and undefined NRMSE values hold NaN; failures also record
    the error message.
    """

    methods: tuple[str, ...]
    seed: int
    estimates: dict[str, dict[str, np.ndarray]]
    failures: dict[str, dict[tuple[int, int], str]] = field(default_factory=dict)
    details: dict[str, dict[tuple[int, int], dict]] = field(default_factory=dict)

    def values(self, method: str, metric: str) -> np.ndarray:
        return self.estimates[method][metric]

    def mean(self, method: str, metric: str) -> float | None:
        v = self.values(method, metric)
        return float(v.mean()) if np.all(np.isfinite(v)) else None

    def complete(self, method: str, metric: str) -> bool:
        return bool(np.all(np.isfinite(self.values(method, metric))))

    def diffs(self, reference: str, other: str, metric: str) -> np.ndarray:
        """``other - reference`` per cell; positive means the reference scored lower."""
        for m in (reference, other):
            if not self.complete(m, metric):
                raise IncompleteCells(f"{m}: {metric} is missing for some cells")
        return self.values(other, metric) - self.values(reference, metric)

    def to_dict(self) -> dict:
        cells = []
        n_rep = len(next(iter(self.estimates[self.methods[0]].values())))
        for m in self.methods:
            for i in range(n_rep):
                for j in range(2):
                    row = {"method": m, "replication": i + 1, "fold": j + 1}
                    for k in METRICS:
                        x = float(self.estimates[m][k][i, j])
                        row[k] = x if math.isfinite(x) else None
                    if (i, j) in self.failures.get(m, {}):
                        row["failure"] = self.failures[m][(i, j)]
                    if (i, j) in self.details.get(m, {}):
                        row["model"] = self.details[m][(i, j)]
                    cells.append(row)
        means = {m: {k: self.mean(m, k) for k in METRICS} for m in self.methods}
        return {"seed": self.seed, "methods": list(self.methods), "means": means, "cells": cells}


def run_5x2(methods: Mapping[str, Method], data: Dataset, plan: FoldPlan, on_cell=None) -> CVReport:
    """Train every method on each of the ten folds and score it on the complement.

    A method that raises in some cell is recorded as failed there; the other
    cells and methods still run. ``on_cell(method, i, j, metrics_or_None)`` is
    called after each cell.
    """
    if not methods:
        raise ValueError("no methods to evaluate")
    names = tuple(methods)
    n_rep = len(plan.replications)
    est = {m: {k: np.full((n_rep, 2), np.nan) for k in METRICS} for m in names}
    failures = {m: {} for m in names}
    details = {m: {} for m in names}
    for i, j, train_idx, test_idx in plan.splits():
        train, test = data.subset(train_idx), data.subset(test_idx)
        Y = test.target_matrix()
        y = test.target_classes()
        seed = cell_seed(plan.seed, i, j)
        for name in names:
            try:
                model = methods[name](train, seed)
                outputs, classes = model.predict(test)
                met = compute_metrics(outputs, classes, Y, y)
            except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
                failures[name][(i, j)] = f"{type(exc).__name__}: {exc}"
                met = None
            else:
                for k in METRICS:
                    x = met.get(k)
                    est[name][k][i, j] = np.nan if x is None else x
                if hasattr(model, "summary"):
                    details[name][(i, j)] = model.summary()
            if on_cell is not None:
                on_cell(name, i, j, met)
    return CVReport(names, plan.seed, est, failures, details)


# --------------------------------------------------------------------------
# Paired tests
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    threshold: float
    significant: bool
    methods: tuple[str, str] = ("", "")
    metric: str = ""
    test: str = ""

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "metric": self.metric,
            "methods": list(self.methods),
            "statistic": self.statistic,
            "threshold": self.threshold,
            "significant": self.significant,
        }


def _as_cells(diffs) -> np.ndarray:
    p = np.asarray(diffs, dtype=float)
    if p.shape == (10,):
        p = p.reshape(5, 2)
    if p.shape != (5, 2):
        raise ValueError(f"expected 10 differences as a 5x2 layout, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("differences must be finite")
    return p


def _variances(p: np.ndarray) -> np.ndarray:
    pbar = p.mean(axis=1, keepdims=True)
    return ((p - pbar) ** 2).sum(axis=1)


def dietterich_t(diffs, methods=("", ""), metric: str = "") -> TestResult:
    """5x2cv paired t: first difference over the root mean replication variance.

    ``diffs`` is ``[replication, orientation]`` or a flat vector in that
    order. Significant when the statistic exceeds 2.571.
    """
    p = _as_cells(diffs)
    s2 = _variances(p)
    if not np.any(s2 > 0):
        raise ZeroVariance("all replication variances are zero")
    t = float(p[0, 0] / math.sqrt(s2.mean()))
    return TestResult(t, T_THRESHOLD, t > T_THRESHOLD, tuple(methods), metric, "t")


def alpaydin_f(diffs, methods=("", ""), metric: str = "") -> TestResult:
    """Combined 5x2cv F: sum of squared differences over twice the summed variances."""
    p = _as_cells(diffs)
    s2 = _variances(p)
    den = 2.0 * float(s2.sum())
    if den <= 0:
        raise ZeroVariance("all replication variances are zero")
    f = float(np.sum(p**2)) / den
    return TestResult(f, F_THRESHOLD, f > F_THRESHOLD, tuple(methods), metric, "F")


def _test_scale(metric: str) -> float:
    # error rates enter the tests as proportions
    return 0.01 if metric == "error_pct" else 1.0


def compare(report: CVReport, reference: str, other: str, metric: str) -> dict[str, TestResult | str]:
    """Both tests for one pair and metric; a refused test maps to the reason."""
    out: dict[str, TestResult | str] = {}
    try:
        d = report.diffs(reference, other, metric) * _test_scale(metric)
    except IncompleteCells as exc:
        return {"t": str(exc), "F": str(exc)}
    for name, fn in (("t", dietterich_t), ("F", alpaydin_f)):
        try:
            out[name] = fn(d, (reference, other), metric)
        except ZeroVariance as exc:
            out[name] = str(exc)
    return out


# --------------------------------------------------------------------------
# Tables
# --------------------------------------------------------------------------


def _fmt(x, digits: int) -> str:
    return "NA" if x is None else f"{x:.{digits}f}"


_DIGITS = {"error_pct": 2, "mse": 4, "nrmse": 4}
_LABELS = {"error_pct": "Error", "mse": "MSE", "nrmse": "NRMSE"}


def metrics_rows(report: CVReport) -> list[list[str]]:
    rows = [["Method"] + [_LABELS[k] for k in METRICS]]
    for m in report.methods:
        rows.append([m] + [_fmt(report.mean(m, k), _DIGITS[k]) for k in METRICS])
    return rows


def significance_rows(report: CVReport, reference: str | None = None) -> list[list[str]]:
    """Tests of each later method against ``reference`` (default: the first).

    Cells read ``statistic`` with a trailing ``*`` when significant, or
    ``NA`` when the test was refused.
    """
    reference = reference or report.methods[0]
    others = [m for m in report.methods if m != reference]
    rows = [["Test", "Metric"] + [f"{reference} vs {o}" for o in others]]
    for test in ("t", "F"):
        for k in METRICS:
            row = [test, _LABELS[k]]
            for o in others:
                r = compare(report, reference, o, k)[test]
                row.append(f"{r.statistic:.3f}{'*' if r.significant else ''}" if isinstance(r, TestResult) else "NA")
            rows.append(row)
    return rows


def significance_results(report: CVReport, reference: str | None = None) -> list[dict]:
    reference = reference or report.methods[0]
    out = []
    for o in report.methods:
        if o == reference:
            continue
        for k in METRICS:
            for test, r in compare(report, reference, o, k).items():
                if isinstance(r, TestResult):
                    out.append(r.to_dict())
                else:
                    out.append({"test": test, "metric": k, "methods": [reference, o], "refused": r})
    return out


def format_text(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for n, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) if c == 0 else cell.rjust(w) for c, (cell, w) in enumerate(zip(r, widths))).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_delimited(rows: Sequence[Sequence[str]], delimiter: str = "\t") -> str:
    return "\n".join(delimiter.join(r) for r in rows) + "\n"
