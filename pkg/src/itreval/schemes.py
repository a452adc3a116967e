"""Hypothetical implementation schemes for a rule that has not been deployed.

Each scheme returns, per unit, the probability rho*(x) that the rule's
recommendation is followed once the rule is made available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError

KINDS = ("random", "cognitive_bias", "confidence_level")
ALIASES = {"rd": "random", "cb": "cognitive_bias", "cl": "confidence_level",
           "random": "random", "cognitive_bias": "cognitive_bias",
           "confidence_level": "confidence_level", "cognitive-bias": "cognitive_bias",
           "confidence-level": "confidence_level"}


def normal_quantile(p):
    """Standard normal quantile (scipy's ndtri, accurate to ~1e-15 relative)."""
    return ndtri(p)


@dataclass(frozen=True, eq=False)
class SchemeSpec:
    kind: str
    alpha: float
    tau_tilde: np.ndarray | None = None
    se_tau: np.ndarray | None = None

    def __post_init__(self):
        kind = ALIASES.get(self.kind)
        if kind is None:
            raise ConfigError(f"unknown implementation scheme {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        _check_alpha(kind, self.alpha)
        if kind == "confidence_level":
            if self.tau_tilde is None or self.se_tau is None:
                raise ConfigError("confidence-level scheme needs tau_tilde and se_tau")
            tt = np.asarray(self.tau_tilde, dtype=float)
            se = np.asarray(self.se_tau, dtype=float)
            if tt.shape != se.shape:
                raise ConfigError("tau_tilde and se_tau must have the same length")
            if np.any(se < 0):
                raise ConfigError("standard errors must be non-negative")
            object.__setattr__(self, "tau_tilde", tt)
            object.__setattr__(self, "se_tau", se)

    def rho(self, rule_rec: np.ndarray, pi_hat: np.ndarray | None = None) -> np.ndarray:
        n = np.asarray(rule_rec).shape[0]
        if self.kind == "random":
            return rho_random(self.alpha, n)
        if self.kind == "cognitive_bias":
            if pi_hat is None:
                raise ConfigError("cognitive-bias scheme needs the fitted propensity score")
            return rho_cognitive_bias(self.alpha, rule_rec, pi_hat)
        return rho_confidence_level(self.alpha, self.tau_tilde, self.se_tau)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": float(self.alpha)}


def _check_alpha(kind: str, alpha: float) -> None:
    alpha = float(alpha)
    ok = {
        "random": 0.0 <= alpha <= 1.0,
        "cognitive_bias": 0.0 <= alpha < 1.0,
        "confidence_level": 0.0 < alpha <= 1.0,
    }[kind]
    if not ok:
        label = kind.replace("_", "-")
        raise ConfigError(f"alpha out of range for {label} scheme: {alpha!r}")


def rho_random(alpha: float, n: int) -> np.ndarray:
    """Every unit follows the rule with the same probability ``alpha``."""
    _check_alpha("random", alpha)
    return np.full(n, float(alpha))


def rho_cognitive_bias(alpha: float, rule_rec, pi_hat) -> np.ndarray:
    """{1 - |r(x) - pi(x)|} ** (atanh(alpha)).

    The exponent 0.5 log((1 + alpha) / (1 - alpha)) equals atanh(alpha), so
    alpha = 0 gives full compliance and alpha -> 1 drives compliance to zero
    wherever the recommendation departs from usual care.
    """
    _check_alpha("cognitive_bias", alpha)
    r = np.asarray(rule_rec, dtype=float)
    pi = np.asarray(pi_hat, dtype=float)
    if r.shape != pi.shape:
        raise ConfigError("rule_rec and pi_hat must have the same length")
    exponent = 0.5 * np.log((1.0 + alpha) / (1.0 - alpha))
    return np.power(1.0 - np.abs(r - pi), exponent)


def rho_confidence_level(alpha: float, tau_tilde, se_tau) -> np.ndarray:
    """1 when the two-sided (1 - alpha) interval for the ITE excludes zero."""
    _check_alpha("confidence_level", alpha)
    tt = np.asarray(tau_tilde, dtype=float)
    se = np.asarray(se_tau, dtype=float)
    if tt.shape != se.shape:
        raise ConfigError("tau_tilde and se_tau must have the same length")
    if np.any(se < 0):
        raise ConfigError("standard errors must be non-negative")
    q = normal_quantile(1.0 - alpha / 2.0)
    return ((tt - q * se) * (tt + q * se) > 0).astype(float)
