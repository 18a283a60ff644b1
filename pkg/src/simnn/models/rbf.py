"""Gaussian RBF baselines on standardised, 1-of-c encoded inputs.

``RBFk`` takes its centres from k-means, ``RBF2`` from the Leader 2 leaders
found with the heterogeneous similarity. Both share one width and the SNN's
ridge/GCV output layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clustering import _sq_dists, kmeans, leader2
from ..dataset import Dataset, Encoder, Example, encode_dataset, fit_encoder
from ..similarity import SimilarityConfig, fit_similarity_model, similarity_matrix
from .ridge import RidgeFit, fit_output_layer
from .snn import S_MIN_GRID, select_by_gcv

RBFK = "RBFk"
RBF2 = "RBF2"
K_GRID = (2, 4, 8, 16, 32)
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class RBFConfig:
    variant: str = RBFK
    k: int | None = None
    k_grid: tuple[int, ...] = K_GRID
    s_min: float | None = None
    s_min_grid: tuple[float, ...] = S_MIN_GRID
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    sigma_factor: float = 1.0
    seed: int = 0
    penalize_bias: bool = False

    def __post_init__(self):
        if self.variant not in (RBFK, RBF2):
            raise ValueError(f"variant must be {RBFK!r} or {RBF2!r}, got {self.variant!r}")
        if self.sigma_factor <= 0:
            raise ValueError("sigma_factor must be positive")

    def candidates(self):
        if self.variant == RBFK:
            return (self.k,) if self.k is not None else tuple(self.k_grid)
        return (self.s_min,) if self.s_min is not None else tuple(self.s_min_grid)


def rbf_sigma(centers: np.ndarray, factor: float = 1.0) -> float:
    """Mean distance from each centre to its nearest other centre, times ``factor``."""
    C = np.asarray(centers, dtype=float)
    if len(C) < 2:
        return 1.0
    D = _sq_dists(C, C)
    np.fill_diagonal(D, np.inf)
    sigma = float(np.mean(np.sqrt(D.min(axis=1)))) * factor
    return max(sigma, SIGMA_FLOOR)


def rbf_units(Z: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-_sq_dists(Z, centers) / (2.0 * sigma**2))


@dataclass(frozen=True, eq=False)
class RBFModel:
    variant: str
    encoder: Encoder
    centers: np.ndarray
    sigma: float
    W: np.ndarray
    lam: float
    gcv: float
    hyper: float
    classes: tuple[str, ...]
    center_rows: tuple[int, ...] = ()

    @property
    def n_hidden(self) -> int:
        return len(self.centers)

    def hidden(self, data: Dataset) -> np.ndarray:
        Z = encode_dataset(self.encoder, data)
        return np.hstack([np.ones((len(Z), 1)), rbf_units(Z, self.centers, self.sigma)])

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        outputs = self.hidden(data) @ self.W.T
        return outputs, np.argmax(outputs, axis=1)

    def summary(self) -> dict:
        key = "k" if self.variant == RBFK else "s_min"
        return {key: self.hyper, "hidden": self.n_hidden, "sigma": self.sigma, "lambda": self.lam, "gcv": self.gcv}


@dataclass(frozen=True)
class _Candidate:
    hyper: float
    centers: np.ndarray
    rows: tuple[int, ...]
    sigma: float
    fit: RidgeFit


def train_rbf(train: Dataset, config: RBFConfig | None = None) -> RBFModel:
    config = config or RBFConfig()
    if len(train) == 0:
        raise ValueError("empty training fold")
    encoder = fit_encoder(train)
    Z = encode_dataset(encoder, train)
    Y = train.target_matrix()
    S = None
    if config.variant == RBF2:
        S = similarity_matrix(fit_similarity_model(train, config.similarity), train)

    def build(value):
        if config.variant == RBFK:
            k = min(int(value), len(Z))
            centers, rows = kmeans(Z, k, config.seed).centers, ()
        else:
            rows = leader2(S, len(S), float(value)).leaders
            centers = Z[list(rows)]
        sigma = rbf_sigma(centers, config.sigma_factor)
        H = np.hstack([np.ones((len(Z), 1)), rbf_units(Z, centers, sigma)])
        return _Candidate(value, centers, rows, sigma, fit_output_layer(H, Y, config.penalize_bias))

    best = select_by_gcv(config.candidates(), build)
    return RBFModel(
        variant=config.variant,
        encoder=encoder,
        centers=best.centers,
        sigma=best.sigma,
        W=best.fit.W,
        lam=best.fit.lam,
        gcv=best.fit.gcv,
        hyper=float(best.hyper),
        classes=train.classes,
        center_rows=tuple(best.rows),
    )


def predict_rbf(model: RBFModel, x: Example | Dataset):
    if isinstance(x, Dataset):
        return model.predict(x)
    out, cls = model.predict(Dataset.from_examples(model.encoder.schema, [x]))
    return out[0], int(cls[0])
