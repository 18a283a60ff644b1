"""Leader 2 clustering over arbitrary similarities, and k-means for RBFk."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

SimilaritySource = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _as_matrix(sim: SimilaritySource, n: int) -> np.ndarray:
    if callable(sim):
        idx = np.arange(n)
        return np.asarray(sim(idx, idx), dtype=float)
    S = np.asarray(sim, dtype=float)
    if S.shape != (n, n):
        raise ValueError(f"similarity matrix has shape {S.shape}, expected {(n, n)}")
    return S


@dataclass(frozen=True)
class Clustering:
    leaders: tuple[int, ...]
    assignment: tuple[int, ...]
    s_min: float

    @property
    def n_clusters(self) -> int:
        return len(self.leaders)

    def members(self, i: int) -> list[int]:
        return [e for e, a in enumerate(self.assignment) if a == i]

    def leader_of(self, example: int) -> int:
        return self.leaders[self.assignment[example]]

    def dump(self) -> str:
        """One line per cluster: leader index, then member indices."""
        lines = []
        for i, lead in enumerate(self.leaders):
            lines.append(" ".join(str(x) for x in [lead] + [m for m in self.members(i) if m != lead]))
        return "\n".join(lines) + "\n"


def leader2(sim: SimilaritySource, n: int, s_min: float) -> Clustering:
    """Two-pass Leader 2 clustering.

    Pass 1 scans examples in index order and opens a new cluster whenever an
    example is less than ``s_min`` similar to every leader found so far.
    Pass 2 assigns each non-leader to its most similar leader (lowest leader
    position on ties); a leader always heads its own cluster.

    The four guarantees (leader similarity ``>= s_min``, leaders mutually
    ``< s_min``, duplicates share a leader, best leader chosen) hold whenever
    every example is at least ``s_min`` similar to itself, which is automatic
    for reflexive measures with ``s(x, x) = 1``.
    """
    if not 0.0 <= s_min <= 1.0:
        raise ValueError(f"s_min must lie in [0, 1], got {s_min}")
    if n < 1:
        raise ValueError("need at least one example")
    S = _as_matrix(sim, n)
    leaders: list[int] = []
    for i in range(n):
        if not leaders or np.all(S[i, leaders] < s_min):
            leaders.append(i)
    L = np.array(leaders)
    assignment = np.argmax(S[:, L], axis=1)
    assignment[L] = np.arange(len(L))
    return Clustering(tuple(int(x) for x in L), tuple(int(a) for a in assignment), float(s_min))


@dataclass(frozen=True)
class PropertyReport:
    min_similarity: bool
    leaders_separated: bool
    duplicates_together: bool
    best_leader: bool
    consequence: bool

    @property
    def all(self) -> bool:
        return all(self.__dict__.values())


def verify_properties(sim: SimilaritySource, c: Clustering, groups=None) -> PropertyReport:
    """Check the four Leader 2 guarantees on a clustering.

    ``groups`` optionally labels duplicate examples with a shared id; by
    default two examples count as duplicates when their similarity rows are
    equal.
    """
    n = len(c.assignment)
    S = _as_matrix(sim, n)
    L = np.array(c.leaders)
    a = np.array(c.assignment)
    own = S[np.arange(n), L[a]]
    p1 = bool(np.all(own >= c.s_min))
    LL = S[np.ix_(L, L)]
    off = ~np.eye(len(L), dtype=bool)
    p2 = bool(np.all(LL[off] < c.s_min))
    if groups is None:
        groups = np.unique(S, axis=0, return_inverse=True)[1].ravel()
    groups = np.asarray(groups)
    p3 = all(len(np.unique(a[groups == g])) == 1 for g in np.unique(groups))
    p4 = bool(np.all(own >= S[:, L].max(axis=1)))
    cons = True if len(L) < 2 else bool(own.min() > LL[off].max())
    return PropertyReport(p1, p2, p3, p4, cons)


@dataclass(frozen=True)
class ClusterStats:
    sizes: np.ndarray
    mean_similarity: np.ndarray

    @property
    def mean_size(self) -> float:
        return float(np.mean(self.sizes))

    @property
    def mean_compactness(self) -> float:
        return float(np.mean(self.mean_similarity))


def cluster_stats(sim: SimilaritySource, c: Clustering, include_leader: bool = True) -> ClusterStats:
    """Cluster sizes ``l_i`` and mean member-to-leader similarity ``m_i``.

    With ``include_leader`` the leader's self-similarity enters its own mean;
    a singleton then uses its self-similarity when excluded terms leave
    nothing to average.
    """
    n = len(c.assignment)
    S = _as_matrix(sim, n)
    a = np.array(c.assignment)
    sizes = np.bincount(a, minlength=c.n_clusters).astype(float)
    means = np.empty(c.n_clusters)
    for i, lead in enumerate(c.leaders):
        members = np.flatnonzero(a == i)
        if not include_leader and len(members) > 1:
            members = members[members != lead]
        means[i] = S[members, lead].mean()
    return ClusterStats(sizes, means)


# --------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # direct differences keep d(x, x) exactly 0
    D = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", D, D)


def _spread_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(len(X)))]
    d = _sq_dists(X, X[idx]).ravel()
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        idx.append(nxt)
        d = np.minimum(d, _sq_dists(X, X[[nxt]]).ravel())
    return X[idx].copy()


def _lloyd(X, C, max_iter):
    history = []
    labels = None
    for _ in range(max_iter):
        D = _sq_dists(X, C)
        new = np.argmin(D, axis=1)
        history.append(float(D[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(C)):
            pts = X[labels == j]
            if len(pts):
                C[j] = pts.mean(axis=0)
            else:
                far = int(np.argmax(D[np.arange(len(X)), labels]))
                C[j] = X[far]
                D[far] = 0.0
    D = _sq_dists(X, C)
    labels = np.argmin(D, axis=1)
    return C, labels, float(D[np.arange(len(X)), labels].sum()), history


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    assignment: np.ndarray
    inertia: float
    history: tuple[float, ...]


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = 5, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with farthest-point initialisation, best of ``restarts``."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = len(X)
    if k <= 0:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points {n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        C, labels, inertia, hist = _lloyd(X, _spread_init(X, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(C, labels, inertia, tuple(hist))
    return best
