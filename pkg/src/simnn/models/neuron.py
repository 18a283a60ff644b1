"""S-neuron: a sigmoid-like automorphism of [0, 1] applied to a similarity."""
from __future__ import annotations

import math

import numpy as np

from ..clustering import ClusterStats
from ..dataset import Dataset, Example
from ..similarity import SimilarityModel, cross_similarity, similarity

# alpha = e^0.1 - 1 gives p = 0.1 for a cluster of average compactness
COMPACTNESS_ALPHA = math.expm1(0.1)
MAX_SMOOTHING = 1e12


def shape_offset(p):
    """``a(p) = (-0.5 + sqrt(0.25 + 4p)) / 2``, in cancellation-free form."""
    p = np.asarray(p, dtype=float)
    with np.errstate(invalid="ignore"):
        a = 2.0 * p / (0.5 + np.sqrt(0.25 + 4.0 * p))
    return np.where(np.isinf(p), np.inf, a)


def activation(x, p):
    """Two-branch activation ``f(x, p)``.

    Uses the equivalent forms ``a x / (a + 0.5 - x)`` below the midpoint and
    ``1 - a (1 - x) / (a + x - 0.5)`` above it, which keep ``f(0) = 0``,
    ``f(0.5) = 0.5`` and ``f(1) = 1`` exact in floating point.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("smoothing parameter p must be positive")
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError("activation input must lie in [0, 1]")
    a = shape_offset(p)
    with np.errstate(invalid="ignore"):
        # grouping keeps the denominators exactly a at x = 0.5
        lower = a * x / (a + (0.5 - x))
        upper = 1.0 - a * (1.0 - x) / (a + (x - 0.5))
    out = np.where(x <= 0.5, lower, upper)
    out = np.where(np.isinf(a), x, out)
    return out if out.ndim else float(out)


def smoothing_from_stats(stats: ClusterStats) -> np.ndarray:
    """``p_i = -ln chi_i`` from the relative compactness ``chi_i`` of each cluster."""
    ml = stats.sizes * stats.mean_similarity
    ref = COMPACTNESS_ALPHA * stats.mean_size * stats.mean_compactness
    if ref <= 0:
        raise ValueError("global cluster averages must be positive")
    with np.errstate(divide="ignore"):
        p = np.log1p(ref / ml)
    return np.minimum(p, MAX_SMOOTHING)


def s_neuron(model: SimilarityModel, prototype: Example, p: float, x: Example) -> float:
    return activation(similarity(model, x, prototype), p)


def design_matrix_from_similarity(S: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Prepend the constant column to ``f(S[:, j], p_j)``."""
    S = np.clip(S, 0.0, 1.0)
    return np.hstack([np.ones((len(S), 1)), activation(S, np.asarray(p)[None, :])])


def design_matrix(prototypes: Dataset, p, model: SimilarityModel, examples: Dataset) -> np.ndarray:
    """``N x (h+1)`` hidden-layer outputs; column 0 is the bias unit."""
    S = cross_similarity(model, examples, prototypes)
    return design_matrix_from_similarity(S, np.asarray(p, dtype=float))
