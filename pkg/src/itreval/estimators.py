"""Point estimators of the rule effect (ARE), implementation effect (AIE) and
maximal implementation gain (MIG).

New-rule regime: data come from a population where the rule was never used.
Partial regime: some unidentified units were treated following the rule;
the mixture-of-experts (ME) estimators then rely on an :class:`EmFit`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConvergenceError, DataError

if TYPE_CHECKING:
    from .data import Dataset
    from .em import EmFit
    from .nuisance import NuisanceEstimates

log = logging.getLogger(__name__)


@dataclass
class EstimateReport:
    estimand: str
    estimator_name: str
    point: float
    n: int
    regime: str
    ci_low: float | None = None
    ci_high: float | None = None
    scheme: dict | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "estimator": self.estimator_name,
            "regime": self.regime,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
            "scheme": self.scheme,
            "seed": self.seed,
        }


def _check(data: Dataset, nuis: NuisanceEstimates) -> None:
    if data.n != nuis.n:
        raise DataError(f"dataset has {data.n} units but nuisance estimates have {nuis.n}")


def _propensity(nuis: NuisanceEstimates, clip: float | None) -> np.ndarray:
    if nuis.pi_hat is None:
        raise DataError("estimator needs the fitted propensity score")
    pi = nuis.pi_hat
    if clip is not None:
        k = int(np.sum((pi < clip) | (pi > 1 - clip)))
        if k:
            log.info("clipped %d propensity score(s) to [%g, %g]", k, clip, 1 - clip)
        pi = np.clip(pi, clip, 1 - clip)
    if np.any((pi <= 0) | (pi >= 1)):
        raise DataError("propensity scores must lie strictly inside (0, 1)")
    return pi


def _check_rho(rho_star, n: int) -> np.ndarray:
    rho = np.asarray(rho_star, dtype=float)
    if rho.shape != (n,):
        raise DataError(f"rho_star has shape {rho.shape}, expected ({n},)")
    if np.any((rho < 0) | (rho > 1)):
        raise DataError("rho_star values must lie in [0, 1]")
    return rho


# -- new rule --------------------------------------------------------------

def are_q(data: Dataset, nuis: NuisanceEstimates) -> float:
    """Mean of q1_hat(X) - Y."""
    _check(data, nuis)
    return float(np.mean(nuis.q1_hat - data.outcome))


def are_ipw(data: Dataset, nuis: NuisanceEstimates, clip: float | None = None) -> float:
    _check(data, nuis)
    pi = _propensity(nuis, clip)
    r, a, y = nuis.rule_rec, data.treatment, data.outcome
    weight = r * a / pi + (1 - r) * (1 - a) / (1 - pi) - 1.0
    return float(np.mean(weight * y))


def are_aipw(data: Dataset, nuis: NuisanceEstimates, clip: float | None = None) -> float:
    """Augmented IPW with C = 1{r(X) = A} and d = P(C = 1 | X)."""
    _check(data, nuis)
    pi = _propensity(nuis, clip)
    y = data.outcome
    c = (nuis.rule_rec == data.treatment).astype(float)
    d = pi * c + (1 - pi) * (1 - c)
    return float(np.mean(c * y / d - (c - d) / d * nuis.q1_hat - y))


def are_ite(data: Dataset, nuis: NuisanceEstimates) -> float:
    _check(data, nuis)
    return float(np.mean((nuis.rule_rec - _propensity(nuis, None)) * nuis.tau_hat))


def aie_ite(data: Dataset, nuis: NuisanceEstimates, rho_star) -> float:
    _check(data, nuis)
    rho = _check_rho(rho_star, nuis.n)
    return float(np.mean(rho * (nuis.rule_rec - _propensity(nuis, None)) * nuis.tau_hat))


def mig_ite(data: Dataset, nuis: NuisanceEstimates, rho_star) -> float:
    _check(data, nuis)
    rho = _check_rho(rho_star, nuis.n)
    return float(np.mean((1 - rho) * (nuis.rule_rec - _propensity(nuis, None)) * nuis.tau_hat))


# -- partially implemented rule ---------------------------------------------
# The MIG does not involve the latent implementation indicator, so its
# estimators coincide with the new-rule ARE formulas.

mig_q = are_q
mig_ipw = are_ipw
mig_aipw = are_aipw


def _pis0(nuis: NuisanceEstimates, em: EmFit, allow_nonconverged: bool) -> np.ndarray:
    if not em.converged and not allow_nonconverged:
        raise ConvergenceError(f"EM did not converge ({em.status}); refusing mixture-of-experts estimate")
    pis0 = em.pis0_hat
    if pis0.shape != (nuis.n,):
        raise DataError("EM fit and nuisance estimates cover different units")
    return pis0


def are_me(data: Dataset, nuis: NuisanceEstimates, em: EmFit,
           allow_nonconverged: bool = False) -> float:
    """Mean of {r(X) - pi0_hat(X)} tau_hat(X)."""
    _check(data, nuis)
    pis0 = _pis0(nuis, em, allow_nonconverged)
    return float(np.mean((nuis.rule_rec - pis0) * nuis.tau_hat))


def aie_me(data: Dataset, nuis: NuisanceEstimates, em: EmFit,
           allow_nonconverged: bool = False) -> float:
    """Mean of Y - q0_hat(X), q0 = mu1 pi0 + mu0 (1 - pi0)."""
    _check(data, nuis)
    pis0 = _pis0(nuis, em, allow_nonconverged)
    q0 = nuis.mu1_hat * pis0 + nuis.mu0_hat * (1 - pis0)
    return float(np.mean(data.outcome - q0))
