"""Similarity Neural Network: S-neurons centred on Leader 2 prototypes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clustering import cluster_stats, leader2
from ..dataset import Dataset, Example
from ..similarity import SimilarityConfig, SimilarityModel, cross_similarity, fit_similarity_model, similarity_matrix
from .neuron import design_matrix_from_similarity, smoothing_from_stats
from .ridge import DegenerateGCV, RidgeFit, fit_output_layer

S_MIN_GRID = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80)


@dataclass(frozen=True)
class SNNConfig:
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    s_min: float | None = None
    s_min_grid: tuple[float, ...] = S_MIN_GRID
    include_leader: bool = True
    penalize_bias: bool = False

    def candidates(self) -> tuple[float, ...]:
        return (self.s_min,) if self.s_min is not None else tuple(self.s_min_grid)


@dataclass(frozen=True, eq=False)
class SNNModel:
    similarity: SimilarityModel
    prototypes: Dataset
    prototype_rows: tuple[int, ...]
    smoothing: np.ndarray
    W: np.ndarray
    lam: float
    gcv: float
    s_min: float
    classes: tuple[str, ...]
    penalize_bias: bool = False

    @property
    def n_hidden(self) -> int:
        return len(self.prototype_rows)

    def hidden(self, data: Dataset) -> np.ndarray:
        S = cross_similarity(self.similarity, data, self.prototypes)
        return design_matrix_from_similarity(S, self.smoothing)

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        outputs = self.hidden(data) @ self.W.T
        return outputs, np.argmax(outputs, axis=1)

    def summary(self) -> dict:
        return {"s_min": self.s_min, "hidden": self.n_hidden, "lambda": self.lam, "gcv": self.gcv}


@dataclass(frozen=True)
class _Candidate:
    s_min: float
    leaders: tuple[int, ...]
    smoothing: np.ndarray
    fit: RidgeFit


def _fit_at(S: np.ndarray, Y: np.ndarray, s_min: float, config: SNNConfig) -> _Candidate:
    c = leader2(S, len(S), s_min)
    p = smoothing_from_stats(cluster_stats(S, c, config.include_leader))
    H = design_matrix_from_similarity(S[:, list(c.leaders)], p)
    return _Candidate(s_min, c.leaders, p, fit_output_layer(H, Y, config.penalize_bias))


def select_by_gcv(candidates, build):
    """Build each candidate and keep the one with the lowest GCV (first on ties)."""
    best = None
    failures = []
    for value in candidates:
        try:
            cand = build(value)
        except DegenerateGCV as exc:
            failures.append(f"{value}: {exc}")
            continue
        if best is None or cand.fit.gcv < best.fit.gcv:
            best = cand
    if best is None:
        raise RuntimeError("no hyperparameter candidate could be fitted: " + "; ".join(failures))
    return best


def train_snn(train: Dataset, config: SNNConfig | None = None) -> SNNModel:
    """Fit the similarity model, cluster, set smoothing, then solve the output layer.

    With ``config.s_min`` unset the threshold is chosen from
    ``config.s_min_grid`` by training-fold GCV.
    """
    config = config or SNNConfig()
    if len(train) == 0:
        raise ValueError("empty training fold")
    model = fit_similarity_model(train, config.similarity)
    S = similarity_matrix(model, train)
    Y = train.target_matrix()
    best = select_by_gcv(config.candidates(), lambda s: _fit_at(S, Y, s, config))
    return SNNModel(
        similarity=model,
        prototypes=train.subset(best.leaders),
        prototype_rows=best.leaders,
        smoothing=best.smoothing,
        W=best.fit.W,
        lam=best.fit.lam,
        gcv=best.fit.gcv,
        s_min=best.s_min,
        classes=train.classes,
        penalize_bias=config.penalize_bias,
    )


def predict_snn(model: SNNModel, x: Example | Dataset):
    """Outputs and argmax class for one example (or every row of a dataset)."""
    if isinstance(x, Dataset):
        return model.predict(x)
    out, cls = model.predict(Dataset.from_examples(model.similarity.schema, [x]))
    return out[0], int(cls[0])
