"""Weighted logistic regression by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError, RankDeficiencyError

COEF_TOL = 1e-8
MAX_ITER = 100
RIDGE = 1e-10


def expit(z):
    """Logistic function, evaluated without overflow for large |z|."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True, eq=False)
class GlmFit:
    coef: np.ndarray
    converged: bool
    iterations: int
    final_coef_change: float
    loglik: float
    loglik_trace: np.ndarray
    score_norm: float

    def predict(self, design: np.ndarray) -> np.ndarray:
        return expit(np.asarray(design, dtype=float) @ self.coef)


def check_rank(design: np.ndarray, weights: np.ndarray | None = None, what: str = "design") -> None:
    rows = design if weights is None else design[weights > 0]
    p = design.shape[1]
    if rows.shape[0] < p or np.linalg.matrix_rank(rows) < p:
        raise RankDeficiencyError(f"{what} matrix is rank deficient ({p} columns)")


def weighted_score(design, response, case_weights, coef) -> np.ndarray:
    """X' W (y - p) at ``coef``."""
    p = expit(design @ coef)
    return design.T @ (case_weights * (response - p))


def irls_fit(design, response, case_weights=None, *, init=None,
             tol: float = COEF_TOL, max_iter: int = MAX_ITER) -> GlmFit:
    """Maximize sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)], p = expit(X b).

    Responses may be fractional (posterior probabilities). A fit that fails
    to converge is returned with ``converged=False``; rank deficiency raises.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(response, dtype=float).ravel()
    n, k = X.shape
    w = np.ones(n) if case_weights is None else np.asarray(case_weights, dtype=float).ravel()
    if y.shape[0] != n or w.shape[0] != n:
        raise DataError("design, response and weights must have the same number of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise DataError("non-finite values passed to the logistic fit")
    if np.any((y < 0) | (y > 1)):
        raise DataError("responses must lie in [0, 1]")
    if np.any(w < 0) or not np.any(w > 0):
        raise DataError("case weights must be non-negative with at least one positive")
    check_rank(X, w)

    beta0 = np.zeros(k) if init is None else np.asarray(init, dtype=float).copy()
    trace = np.empty(max_iter + 1)
    beta, iters, status, change, ll, n_trace = _kernels.irls(
        np.ascontiguousarray(X.T), y, w, beta0, tol, max_iter, RIDGE, trace)
    score = weighted_score(X, y, w, beta)
    return GlmFit(
        coef=beta,
        converged=status == _kernels.OK,
        iterations=int(iters),
        final_coef_change=float(change),
        loglik=float(ll),
        loglik_trace=trace[:n_trace].copy(),
        score_norm=float(np.max(np.abs(score))),
    )
