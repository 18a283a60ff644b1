"""Heterogeneous, missing-aware similarity between records.

Per-variable ("partial") similarities:

* categorical -- overlap (1 if equal) or frequency based (``1 - P`` if equal),
* ordinal -- ``2 log(P_lo + ... + P_hi) / (log P_lo + log P_hi)``,
* continuous -- ``(1 - z**beta)**alpha`` with ``z = |u - v| / (r+ - r-)``,
* fuzzy -- possibility, ``sup_u min(mu_A(u), mu_B(u))``.

Each partial ``s`` is rescaled by the training-sample mean ``s..k`` and mapped
through ``n(z) = z**a / (z**a + 1)``; a missing partial becomes 0.5 (midpoint
policy) or is dropped from the average (Gower policy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import MISSING, Dataset, Example, Kind, Schema, _cell, _frozen

MIDPOINT = "midpoint"
GOWER = "gower"
OVERLAP = "overlap"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class SimilarityConfig:
    nominal_mode: str = FREQUENCY
    exponent: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    missing_policy: str = MIDPOINT
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.nominal_mode not in (OVERLAP, FREQUENCY):
            raise ValueError(f"nominal_mode must be 'overlap' or 'frequency', got {self.nominal_mode!r}")
        if self.missing_policy not in (MIDPOINT, GOWER):
            raise ValueError(f"missing_policy must be 'midpoint' or 'gower', got {self.missing_policy!r}")
        if not self.exponent > 0:
            raise ValueError("normalisation exponent must be positive")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if not self.alpha >= 1 or not 0 < self.beta <= 1:
            raise ValueError("continuous shape needs alpha >= 1 and 0 < beta <= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class SimilarityModel:
    """Statistics fitted on a training fold.

    ``variables`` are the schema indices of the predictors; ``probs`` and
    ``ranges`` are keyed by schema index; ``baseline`` holds ``s..k`` per
    entry of ``variables``.
    """

    schema: Schema
    config: SimilarityConfig
    variables: tuple[int, ...]
    probs: Mapping[int, np.ndarray]
    ranges: Mapping[int, tuple[float, float]]
    baseline: np.ndarray

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "variables": list(self.variables),
            "probs": {str(k): p.tolist() for k, p in self.probs.items()},
            "ranges": {str(k): list(r) for k, r in self.ranges.items()},
            "baseline": self.baseline.tolist(),
        }

    @classmethod
    def from_dict(cls, schema: Schema, d: Mapping) -> "SimilarityModel":
        return cls(
            schema,
            SimilarityConfig(**d["config"]),
            tuple(d["variables"]),
            {int(k): _frozen(p) for k, p in d["probs"].items()},
            {int(k): (float(r[0]), float(r[1])) for k, r in d["ranges"].items()},
            _frozen(d["baseline"]),
        )


# --------------------------------------------------------------------------
# Raw partial similarities (vectorised over value pairs)
# --------------------------------------------------------------------------


def _continuous(u, v, lo, hi, alpha, beta):
    diff = np.abs(u - v)
    z = np.clip(diff / (hi - lo), 0.0, 1.0) if hi > lo else (diff > 0).astype(float)
    return (1.0 - z**beta) ** alpha


def _categorical(u, v, probs, mode):
    eq = u == v
    if mode == OVERLAP:
        return eq.astype(float)
    idx = np.where(np.isnan(u), 0, u).astype(int)
    return np.where(eq, 1.0 - probs[idx], 0.0)


def _ordinal(u, v, probs):
    iu = np.where(np.isnan(u), 0, u).astype(int)
    iv = np.where(np.isnan(v), 0, v).astype(int)
    lo, hi = np.minimum(iu, iv), np.maximum(iu, iv)
    cum = np.concatenate([[0.0], np.cumsum(probs)])
    mass = np.minimum(cum[hi + 1] - cum[lo], 1.0)
    logp = np.log(probs)
    s = 2.0 * np.log(mass) / (logp[iu] + logp[iv])
    return np.where(iu == iv, 1.0, s)


def possibility(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Height of the intersection of two trapezoidal fuzzy sets.

    ``pa`` and ``pb`` broadcast against each other and carry the corners
    ``(a, b, c, d)`` in their last axis.
    """
    a1, b1, c1, d1 = np.moveaxis(pa, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(pb, -1, 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        left = (d1 - a2) / ((d1 - c1) + (b2 - a2))
        right = (d2 - a1) / ((d2 - c2) + (b1 - a1))
    h = np.where(c1 < b2, np.where(d1 > a2, left, 0.0), np.where(d2 > a1, right, 0.0))
    core = np.maximum(b1, b2) <= np.minimum(c1, c2)
    return np.where(core, 1.0, np.clip(np.nan_to_num(h), 0.0, 1.0))


def _raw_block(model: SimilarityModel, k: int, u, v, fu=None, fv=None) -> np.ndarray:
    """Raw partial similarities for variable ``k``; NaN where either is missing.

    ``u`` and ``v`` broadcast; ``fu``/``fv`` are fuzzy parameters shaped
    ``u.shape + (4,)``.
    """
    var = model.schema[k]
    cfg = model.config
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    missing = np.isnan(u) | np.isnan(v)
    if var.kind is Kind.CONTINUOUS:
        lo, hi = model.ranges[k]
        with np.errstate(invalid="ignore"):
            s = _continuous(u, v, lo, hi, cfg.alpha, cfg.beta)
    elif var.kind is Kind.CATEGORICAL:
        s = _categorical(u, v, model.probs[k], cfg.nominal_mode)
    elif var.kind is Kind.ORDINAL:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = _ordinal(u, v, model.probs[k])
    else:
        s = possibility(np.nan_to_num(fu), np.nan_to_num(fv))
    return np.where(missing, np.nan, s)


def _normalize(s: np.ndarray, baseline: float, a: float) -> np.ndarray:
    z = s / baseline
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        za = z**a
        out = za / (za + 1.0)
    out = np.where(np.isinf(za), 1.0, out)
    return np.where(z > 0, out, 0.0)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


def _pair_mean(model: SimilarityModel, k: int, train: Dataset) -> float:
    col = train.values[:, k]
    ok = np.flatnonzero(~np.isnan(col))
    if len(ok) < 2:
        return 0.5
    x = col[ok]
    fz = train.fuzzy.get(k)
    fu = fv = None
    if fz is not None:
        fu, fv = fz[ok][:, None, :], fz[ok][None, :, :]
    S = _raw_block(model, k, x[:, None], x[None, :], fu, fv)
    iu = np.triu_indices(len(x), 1)
    m = float(np.mean(S[iu]))
    return m if m > 0 else 0.5


def fit_similarity_model(train: Dataset, config: SimilarityConfig | None = None) -> SimilarityModel:
    """Estimate level probabilities, ranges and baselines from ``train``."""
    config = config or SimilarityConfig()
    if len(train) == 0:
        raise ValueError("cannot fit a similarity model on an empty fold")
    schema = train.schema
    variables = schema.predictors
    probs, ranges = {}, {}
    eps = config.epsilon
    for k in variables:
        var = schema[k]
        col = train.values[:, k]
        ok = col[~np.isnan(col)]
        if var.is_discrete:
            if len(ok):
                p = np.bincount(ok.astype(int), minlength=var.n_levels) / len(ok)
            else:
                p = np.full(var.n_levels, 1.0 / var.n_levels)
            probs[k] = _frozen(np.clip(p, eps, 1.0 - eps))
        elif var.kind is Kind.CONTINUOUS:
            ranges[k] = (float(ok.min()), float(ok.max())) if len(ok) else (0.0, 0.0)
    partial = SimilarityModel(schema, config, variables, probs, ranges, np.ones(len(variables)))
    baseline = np.array([_pair_mean(partial, k, train) for k in variables])
    return SimilarityModel(schema, config, variables, probs, ranges, _frozen(baseline))


# --------------------------------------------------------------------------
# Single-pair API
# --------------------------------------------------------------------------


def _position(model: SimilarityModel, k: int) -> int:
    if not 0 <= k < len(model.schema):
        raise IndexError(f"variable index {k} out of range")
    try:
        return model.variables.index(k)
    except ValueError:
        raise IndexError(f"variable {model.schema[k].name!r} is not a predictor") from None


def partial_similarity(model: SimilarityModel, k: int, u, v):
    """Raw partial similarity for variable ``k`` (a schema index), or MISSING."""
    _position(model, k)
    var = model.schema[k]
    cu, cv = _cell(var, u), _cell(var, v)
    if math.isnan(cu) or math.isnan(cv):
        return MISSING
    fu = np.array(u.params()) if var.kind is Kind.FUZZY else None
    fv = np.array(v.params()) if var.kind is Kind.FUZZY else None
    return float(_raw_block(model, k, cu, cv, fu, fv))


def normalize_partial(model: SimilarityModel, k: int, s) -> float:
    if s is MISSING:
        return 0.5
    j = _position(model, k)
    return float(_normalize(np.float64(s), model.baseline[j], model.config.exponent))


def _check_schema(model: SimilarityModel, data: Dataset) -> None:
    if data.schema.variables != model.schema.variables:
        raise ValueError("data schema does not match the similarity model")


def similarity(model: SimilarityModel, x: Example, y: Example) -> float:
    data = Dataset.from_examples(model.schema, [x, y])
    return float(cross_similarity(model, data.subset([0]), data.subset([1]))[0, 0])


# --------------------------------------------------------------------------
# Matrices
# --------------------------------------------------------------------------


def cross_similarity(model: SimilarityModel, A: Dataset, B: Dataset) -> np.ndarray:
    """Aggregated similarity between every row of ``A`` and every row of ``B``."""
    _check_schema(model, A)
    _check_schema(model, B)
    total = np.zeros((len(A), len(B)))
    count = np.zeros((len(A), len(B)))
    gower = model.config.missing_policy == GOWER
    for j, k in enumerate(model.variables):
        fu = fv = None
        if k in A.fuzzy:
            fu, fv = A.fuzzy[k][:, None, :], B.fuzzy[k][None, :, :]
        s = _raw_block(model, k, A.values[:, k][:, None], B.values[:, k][None, :], fu, fv)
        present = ~np.isnan(s)
        ns = _normalize(np.where(present, s, 0.0), model.baseline[j], model.config.exponent)
        if gower:
            total += np.where(present, ns, 0.0)
            count += present
        else:
            total += np.where(present, ns, 0.5)
    if gower:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = total / count
        return np.where(count > 0, out, 0.5)
    return total / len(model.variables)


def similarity_matrix(model: SimilarityModel, data: Dataset) -> np.ndarray:
    S = cross_similarity(model, data, data)
    iu = np.triu_indices(len(data), 1)
    S[(iu[1], iu[0])] = S[iu]
    return S


def export_matrix(path: str | Path, matrix: np.ndarray, delimiter: str = "\t") -> None:
    """Write a matrix row-major as delimited text with round-trip precision."""
    with open(path, "w") as fh:
        for row in np.asarray(matrix, dtype=float):
            fh.write(delimiter.join(repr(float(x)) for x in row) + "\n")


def load_matrix(path: str | Path, delimiter: str = "\t") -> np.ndarray:
    with open(path) as fh:
        return np.array([[float(t) for t in line.rstrip("\n").split(delimiter)] for line in fh if line.strip()])
