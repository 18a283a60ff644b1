"""Ridge regression for the output layer, with GCV-driven choice of lambda.

By default the bias column (column 0 of ``H``) is left out of the penalty,
so ``A = H^T H + lambda * D`` with ``D = diag(0, 1, ..., 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, svd

LAMBDA_STARTS = (1e-6, 1e-3, 1.0)
MAX_ITER = 100
FALLBACK_LAMBDA = 1e-3
# lambda never drops below this fraction of the mean non-zero eigenvalue of
# the penalised Gram block; duplicate rows otherwise let GCV reward interpolation
LAMBDA_FLOOR = 1e-4


class DegenerateGCV(ValueError):
    """Trace of the projection matrix vanished."""


class LambdaDivergence(RuntimeError):
    """Every fixed-point run ended at a non-finite or non-positive lambda."""


def _penalty(q: int, penalize_bias: bool) -> np.ndarray:
    d = np.ones(q)
    if not penalize_bias:
        d[0] = 0.0
    return d


def _system(H: np.ndarray, lam: float, penalize_bias: bool) -> np.ndarray:
    A = H.T @ H
    A[np.diag_indices_from(A)] += lam * _penalty(H.shape[1], penalize_bias)
    return A


def _spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cholesky solve; symmetric eigensolve when ``A`` is numerically singular."""
    try:
        return cho_solve(cho_factor(A, lower=True), B)
    except LinAlgError:
        w, V = eigh(A)
        w = np.maximum(w, w.max() * len(w) * np.finfo(float).eps)
        return V @ ((V.T @ B) / (w[:, None] if B.ndim == 2 else w))


def _check(H, Y, lam):
    H = np.asarray(H, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(Y))):
        raise ValueError("H and Y must be finite")
    if not (lam > 0 and np.isfinite(lam)):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    if len(H) != len(Y):
        raise ValueError("H and Y have different numbers of rows")
    return H, Y


def ridge_solve(H, Y, lam: float, penalize_bias: bool = False) -> np.ndarray:
    """Weights ``W`` (``m x (h+1)``) minimising ``||Y - H W^T||^2 + lam ||W||^2``.

    A 1-D ``Y`` gives a 1-D weight vector.
    """
    H, Y = _check(H, Y, lam)
    return _spd_solve(_system(H, lam, penalize_bias), H.T @ Y).T


def gcv_score(H, Y, lam: float, penalize_bias: bool = False) -> float:
    """``N y^T P^2 y / Tr(P)^2`` with ``P = I - H A^{-1} H^T``.

    Multi-column ``Y`` sums ``y^T P^2 y`` over columns.
    """
    H, Y = _check(H, Y, lam)
    n = len(H)
    P = np.eye(n) - H @ _spd_solve(_system(H, lam, penalize_bias), H.T)
    tr = np.trace(P)
    if abs(tr) <= 1e-12 * n:
        raise DegenerateGCV("trace of P is zero; too many hidden units for too little regularisation")
    e = P @ Y
    return float(n * np.sum(e * e) / tr**2)


@dataclass(frozen=True)
class RidgeFit:
    W: np.ndarray
    lam: float
    gcv: float
    iterations: int
    start: float
    converged: bool
    runs: tuple[tuple[float, float, float, int, bool], ...] = ()


class _Spectral:
    """Closed-form GCV quantities for all lambda from one SVD.

    Leaving the bias unpenalised is equivalent to centring ``H[:, 1:]`` and
    ``Y`` and fitting the non-bias weights with an ordinary ridge penalty.
    Residuals and traces are assembled from the part of ``Y`` orthogonal to
    the column space plus per-direction shrinkage terms, so nothing cancels
    as lambda goes to zero.
    """

    def __init__(self, H, Y, penalize_bias):
        self.n = len(H)
        if penalize_bias:
            X, T, offset = H, Y, 0.0
        else:
            X = H[:, 1:] - H[:, 1:].mean(axis=0)
            T = Y - Y.mean(axis=0)
            offset = 1.0
        U, sv, _ = svd(X, full_matrices=False)
        keep = sv > sv.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
        U, sv = U[:, keep], sv[keep]
        self.mu = sv**2
        self.c2 = ((U.T @ T) ** 2).sum(axis=1)
        perp = T - U @ (U.T @ T)
        self.perp = float(np.sum(perp * perp))
        self.free = self.n - offset - len(sv)
        self.floor = LAMBDA_FLOOR * float(self.mu.mean()) if len(sv) else 0.0

    def parts(self, lam):
        d = self.mu + lam
        shrink = lam / d
        ee = self.perp + float(np.sum(shrink**2 * self.c2))
        tr = self.free + float(np.sum(shrink))
        return d, ee, tr

    def gcv(self, lam):
        _, ee, tr = self.parts(lam)
        if tr <= 1e-12 * self.n:
            return np.inf
        return self.n * ee / tr**2

    def update(self, lam):
        # Tr(A^-1 D - lam A^-1 D A^-1 D) = sum mu/d^2, w^T D A^-1 D w = sum mu c^2/d^3
        d, ee, tr = self.parts(lam)
        num = ee * float(np.sum(self.mu / d**2))
        den = tr * float(np.sum(self.mu * self.c2 / d**3))
        return num / den if den > 0 else np.inf


def _iterate(sp: _Spectral, lam: float, max_iter: int, tol: float):
    lam = max(lam, sp.floor)
    it = 0
    converged = False
    while it < max_iter:
        with np.errstate(all="ignore"):
            new = sp.update(lam)
        it += 1
        if not np.isfinite(new) or new <= 0:
            return new, it, False
        new = max(new, sp.floor)
        old, lam = lam, new
        if abs(new - old) <= tol * max(old, 1.0):
            converged = True
            break
    return lam, it, converged


def optimize_lambda(
    H,
    Y,
    penalize_bias: bool = False,
    starts=LAMBDA_STARTS,
    max_iter: int = MAX_ITER,
    tol: float = 1e-8,
) -> RidgeFit:
    """Re-estimate lambda by the GCV fixed-point update from several starts.

    Each run stops after ``max_iter`` updates or once successive values differ
    by at most ``tol * max(lambda, 1)``. Iterates are held above
    ``LAMBDA_FLOOR`` times the mean non-zero eigenvalue of the penalised
    block. The finite candidate with the lowest
    GCV wins (earlier starts win ties). Multi-output ``Y`` shares one lambda
    fitted to the stacked residuals.
    """
    H, Y = _check(H, Y, 1.0)
    Y2 = Y[:, None] if Y.ndim == 1 else Y
    sp = _Spectral(H, Y2, penalize_bias)
    runs = []
    for lam0 in starts:
        lam, it, conv = _iterate(sp, float(lam0), max_iter, tol)
        score = sp.gcv(lam) if np.isfinite(lam) and lam > 0 else np.nan
        runs.append((float(lam0), float(lam), float(score), it, conv))
    finite = [r for r in runs if np.isfinite(r[2])]
    if not finite:
        raise LambdaDivergence("no fixed-point run produced a usable lambda")
    best = min(finite, key=lambda r: r[2])
    W = ridge_solve(H, Y, best[1], penalize_bias)
    return RidgeFit(W, best[1], best[2], best[3], best[0], best[4], tuple(runs))


def fit_output_layer(H, Y, penalize_bias: bool = False) -> RidgeFit:
    """:func:`optimize_lambda`, falling back to ``lambda = 1e-3`` on divergence."""
    try:
        return optimize_lambda(H, Y, penalize_bias)
    except LambdaDivergence:
        W = ridge_solve(H, Y, FALLBACK_LAMBDA, penalize_bias)
        try:
            g = gcv_score(H, Y, FALLBACK_LAMBDA, penalize_bias)
        except DegenerateGCV:
            g = np.inf
        return RidgeFit(W, FALLBACK_LAMBDA, g, 0, FALLBACK_LAMBDA, False)
