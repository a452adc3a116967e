"""End-to-end estimation pipelines for both regimes.

A pipeline is a picklable callable ``(data, fit_seed) -> {key: estimate}``
that refits every nuisance model, so the bootstrap can call it on resamples.
Keys read ``"<ESTIMAND>:<ESTIMATOR>"`` with an optional ``"@<scheme>"`` suffix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .bootstrap import bootstrap
from .data import ColumnSpec, Dataset, LinearRule, as_recommendation, evaluate_rule
from .em import em_fit
from .errors import ConfigError
from .estimators import EstimateReport
from .nuisance import assemble
from .schemes import ALIASES, SchemeSpec, _check_alpha


def recommendation(rule: LinearRule | str, data: Dataset) -> np.ndarray:
    """Evaluate a linear rule, or read a 0/1 recommendation column by name."""
    if isinstance(rule, LinearRule):
        return evaluate_rule(rule, data)
    return as_recommendation(data.column(rule), data)


def scheme_label(kind: str, alpha: float) -> str:
    return f"{ALIASES[kind]}(alpha={alpha:g})"


@dataclass(frozen=True)
class NewRuleAnalysis:
    """ARE by Q, IPW, AIPW and ITE plus AIE/MIG under hypothetical schemes."""

    spec: ColumnSpec
    rule: LinearRule | str
    schemes: tuple[tuple[str, float], ...] = ()
    tau_tilde_col: str | None = None
    se_col: str | None = None
    clip: float | None = None

    def __post_init__(self):
        for kind, alpha in self.schemes:
            if kind not in ALIASES:
                raise ConfigError(f"unknown implementation scheme {kind!r}")
            _check_alpha(ALIASES[kind], alpha)
            if ALIASES[kind] == "confidence_level" and not (self.tau_tilde_col and self.se_col):
                raise ConfigError("confidence-level scheme needs tau-tilde and se columns")

    def __call__(self, data: Dataset, fit_seed: int = 0) -> dict[str, float]:
        rec = recommendation(self.rule, data)
        nuis = assemble(data, self.spec, rec)
        out = {
            "ARE:Q": est.are_q(data, nuis),
            "ARE:IPW": est.are_ipw(data, nuis, self.clip),
            "ARE:AIPW": est.are_aipw(data, nuis, self.clip),
            "ARE:ITE": est.are_ite(data, nuis),
        }
        for kind, alpha in self.schemes:
            tt = data.column(self.tau_tilde_col) if self.tau_tilde_col else None
            se = data.column(self.se_col) if self.se_col else None
            scheme = SchemeSpec(kind, alpha, tt, se) if ALIASES[kind] == "confidence_level" \
                else SchemeSpec(kind, alpha)
            rho = scheme.rho(rec, nuis.pi_hat)
            label = scheme_label(kind, alpha)
            out[f"AIE:ITE@{label}"] = est.aie_ite(data, nuis, rho)
            out[f"MIG:ITE@{label}"] = est.mig_ite(data, nuis, rho)
            out[f"IMPL:MEAN_RHO@{label}"] = float(np.mean(rho))
        return out


@dataclass(frozen=True)
class PartialAnalysis:
    """MIG by Q (and IPW/AIPW when ``propensity``), ARE and AIE by mixture of experts."""

    spec: ColumnSpec
    rule: LinearRule | str
    propensity: bool = True
    em_options: dict = field(default_factory=dict)
    allow_nonconverged: bool = False
    clip: float | None = None

    def __call__(self, data: Dataset, fit_seed: int = 0) -> dict[str, float]:
        rec = recommendation(self.rule, data)
        nuis = assemble(data, self.spec, rec, propensity=self.propensity)
        fit = em_fit(data, self.spec, rec, seed=fit_seed, **self.em_options)
        out = {"MIG:Q": est.mig_q(data, nuis)}
        if self.propensity:
            out["MIG:IPW"] = est.mig_ipw(data, nuis, self.clip)
            out["MIG:AIPW"] = est.mig_aipw(data, nuis, self.clip)
        out["ARE:ME"] = est.are_me(data, nuis, fit, self.allow_nonconverged)
        out["AIE:ME"] = est.aie_me(data, nuis, fit, self.allow_nonconverged)
        return out


def evaluate(data: Dataset, pipeline, regime: str, *, B: int = 0, level: float = 0.95,
             seed: int = 0, threads: int | None = 1):
    """Point estimates on ``data`` plus percentile intervals when ``B > 0``.

    Returns ``(reports, bootstrap_results)``; the second is empty without
    bootstrap.
    """
    points = pipeline(data, seed)
    boot = bootstrap(data, pipeline, B, level, seed, threads) if B > 0 else {}
    reports = []
    for key, value in points.items():
        head, _, scheme = key.partition("@")
        estimand, _, name = head.partition(":")
        rep = EstimateReport(estimand, name, value, data.n, regime,
                             scheme=None if not scheme else {"label": scheme}, seed=seed)
        if key in boot:
            rep.ci_low, rep.ci_high = boot[key].ci_low, boot[key].ci_high
        reports.append(rep)
    return reports, boot
