"""Outcome models, propensity score, ITE and rule-prognostic function."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import ColumnSpec, Dataset, LinearRule, as_recommendation
from .errors import ConvergenceError, DataError
from .glm import GlmFit, irls_fit

OVERLAP_BOUNDS = (0.01, 0.99)


class OverlapWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class NuisanceEstimates:
    """Per-unit fitted quantities shared by every estimator.

    ``tau_hat`` and ``q1_hat`` are derived from the outcome fits, never
    refitted, so the identities tau = mu1 - mu0 and
    q1 = r mu1 + (1 - r) mu0 hold exactly.
    """

    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    rule_rec: np.ndarray
    pi_hat: np.ndarray | None = None
    tau_hat: np.ndarray = field(init=False)
    q1_hat: np.ndarray = field(init=False)

    def __post_init__(self):
        mu0 = np.asarray(self.mu0_hat, dtype=float)
        mu1 = np.asarray(self.mu1_hat, dtype=float)
        r = np.asarray(self.rule_rec, dtype=float)
        if not (mu0.shape == mu1.shape == r.shape) or mu0.ndim != 1:
            raise DataError("nuisance vectors must be 1-d and of equal length")
        if self.pi_hat is not None:
            pi = np.asarray(self.pi_hat, dtype=float)
            if pi.shape != mu0.shape:
                raise DataError("pi_hat length mismatch")
            object.__setattr__(self, "pi_hat", pi)
        object.__setattr__(self, "mu0_hat", mu0)
        object.__setattr__(self, "mu1_hat", mu1)
        object.__setattr__(self, "rule_rec", r)
        object.__setattr__(self, "tau_hat", mu1 - mu0)
        object.__setattr__(self, "q1_hat", r * mu1 + (1.0 - r) * mu0)

    @property
    def n(self) -> int:
        return self.mu0_hat.shape[0]


def fit_outcome_models(data: Dataset, spec: ColumnSpec) -> tuple[GlmFit, GlmFit]:
    """Logistic fits of Y on the ``mu_cols`` design within each treatment arm."""
    X = data.design(spec.mu_cols)
    fits = []
    for arm in (0, 1):
        mask = data.treatment == arm
        if not mask.any():
            raise DataError(f"treatment arm A={arm} is empty")
        fit = irls_fit(X[mask], data.outcome[mask])
        if not fit.converged:
            raise ConvergenceError(
                f"outcome model for arm A={arm} did not converge after {fit.iterations} iterations")
        fits.append(fit)
    return fits[0], fits[1]


def fit_propensity(data: Dataset, spec: ColumnSpec) -> GlmFit:
    a = data.treatment
    if np.all(a == a[0]):
        raise DataError("single-valued treatment: propensity score is not estimable")
    fit = irls_fit(data.design(spec.pi_cols), a)
    if not fit.converged:
        raise ConvergenceError(f"propensity model did not converge after {fit.iterations} iterations")
    return fit


def _warn_overlap(pi: np.ndarray) -> None:
    lo, hi = OVERLAP_BOUNDS
    k = int(np.sum((pi < lo) | (pi > hi)))
    if k:
        warnings.warn(f"{k} fitted propensity score(s) outside [{lo}, {hi}]", OverlapWarning, stacklevel=3)


def assemble(data: Dataset, spec: ColumnSpec, rule: LinearRule | np.ndarray,
             propensity: bool = True) -> NuisanceEstimates:
    """Fit the nuisance models and collect per-unit predictions.

    ``propensity=False`` skips the treatment model, which the Q and
    mixture-of-experts estimators do not use.
    """
    spec.validate(data)
    rec = as_recommendation(rule, data)
    fit0, fit1 = fit_outcome_models(data, spec)
    Xmu = data.design(spec.mu_cols)
    pi = None
    if propensity:
        pi = fit_propensity(data, spec).predict(data.design(spec.pi_cols))
        _warn_overlap(pi)
    return NuisanceEstimates(fit0.predict(Xmu), fit1.predict(Xmu), rec, pi)
