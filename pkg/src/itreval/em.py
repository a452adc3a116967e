"""Two-expert mixture for the propensity score of a partially implemented rule.

    pi(x) = rho(x) r(x) + {1 - rho(x)} pi0(x)

The rule r is a known deterministic expert, pi0(x) = expit(zeta' x) is the
treatment model of units not following the rule, and rho(x) =
expit(gamma' x) is the gating (implementation) model. Both are fitted by EM
with IRLS M-steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import ColumnSpec, Dataset, LinearRule, as_recommendation
from .errors import ConvergenceError
from .glm import COEF_TOL, MAX_ITER as IRLS_MAX_ITER, RIDGE, check_rank, expit

_STATUS = {
    _kernels.OK: "converged",
    _kernels.MAX_ITER: "max-iter",
    _kernels.GATING_COLLAPSE: "gating-collapse",
    _kernels.GATING_FAILED: "gating-failed",
    _kernels.EXPERT_FAILED: "expert-failed",
}
_FAILED = (_kernels.GATING_FAILED, _kernels.EXPERT_FAILED)


@dataclass(frozen=True, eq=False)
class EmFit:
    zeta: np.ndarray
    gamma: np.ndarray
    posterior_h1: np.ndarray
    pis0_hat: np.ndarray
    rho_hat: np.ndarray
    loglik_trace: np.ndarray
    converged: bool
    iterations: int
    seed: int
    status: str = "converged"
    expert_cols: tuple[str, ...] = ()
    gating_cols: tuple[str, ...] = ()
    start: int = 0
    n_starts: int = 1

    @property
    def posterior_h0(self) -> np.ndarray:
        return 1.0 - self.posterior_h1

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "seed": self.seed,
            "start": self.start,
            "n_starts": self.n_starts,
            "loglik": self.loglik,
            "expert": dict(zip(self.expert_cols, map(float, self.zeta))),
            "gating": dict(zip(self.gating_cols, map(float, self.gamma))),
            "loglik_trace": [float(v) for v in self.loglik_trace],
        }


def implied_propensity(fit: EmFit, rule_rec) -> np.ndarray:
    """rho_hat r + (1 - rho_hat) pi0_hat, the fitted mixture propensity."""
    r = np.asarray(rule_rec, dtype=float)
    return fit.rho_hat * r + (1.0 - fit.rho_hat) * fit.pis0_hat


def _designs(data: Dataset, spec: ColumnSpec):
    spec.validate(data)
    Xg = data.design(spec.gating_cols)
    Xe = data.design(spec.expert_cols)
    names_g = ("_intercept",) + tuple(c for c in spec.gating_cols if c != "_intercept")
    names_e = ("_intercept",) + tuple(c for c in spec.expert_cols if c != "_intercept")
    return Xg, Xe, names_g, names_e


def em_loglik(data: Dataset, spec: ColumnSpec, rule: LinearRule | np.ndarray,
              zeta, gamma) -> float:
    """Observed-data log-likelihood sum_i log(g1 P1 + g0 P0) of the treatment."""
    Xg, Xe, _, _ = _designs(data, spec)
    r = as_recommendation(rule, data).astype(float)
    a = data.treatment
    floor = _kernels.PROB_FLOOR
    g1 = np.clip(expit(Xg @ np.asarray(gamma, dtype=float)), floor, 1 - floor)
    p0 = expit(Xe @ np.asarray(zeta, dtype=float))
    P0 = np.maximum(np.where(a == 1, p0, 1 - p0), floor)
    P1 = np.where(a == 1, r, 1 - r)
    return float(np.sum(np.log(g1 * P1 + (1 - g1) * P0)))


def _single_start(XgT, XeT, a, P1, zeta0, tol, max_iter):
    n = a.shape[0]
    trace = np.empty(max_iter + 1)
    h1 = np.empty(n)
    gamma, zeta, iters, status, _ = _kernels.em(
        XgT, XeT, a, P1, zeta0, tol, max_iter, COEF_TOL, IRLS_MAX_ITER, RIDGE, trace, h1)
    return gamma, zeta, int(iters), int(status), trace[: iters + 1].copy(), h1


def em_fit(data: Dataset, spec: ColumnSpec, rule: LinearRule | np.ndarray, *,
           tol: float = 1e-6, max_iter: int = 500, seed: int = 0, init_sd: float = 1.0,
           n_starts: int = 1, max_restarts: int = 0) -> EmFit:
    """Fit the mixture by EM.

    Start ``k`` draws the expert coefficients from N(0, init_sd^2 I) with a
    generator seeded by ``(seed, k)``; the gate starts at gamma = 0. With
    ``n_starts > 1`` the converged start with the highest log-likelihood is
    kept. ``max_restarts`` adds further starts only while none has converged.
    A start whose M-step IRLS fails is discarded; if every start fails the
    error names the EM iteration at which each one broke down.
    """
    if n_starts < 1 or max_restarts < 0:
        raise ValueError("n_starts must be >= 1 and max_restarts >= 0")
    Xg, Xe, names_g, names_e = _designs(data, spec)
    check_rank(Xg, what="gating design")
    check_rank(Xe, what="expert design")
    r = as_recommendation(rule, data).astype(float)
    a = np.ascontiguousarray(data.treatment, dtype=float)
    P1 = np.where(a == 1, r, 1 - r)
    XgT = np.ascontiguousarray(Xg.T)
    XeT = np.ascontiguousarray(Xe.T)

    def finish(gamma, zeta, iters, status, trace, h1, start, converged):
        return EmFit(
            zeta=zeta, gamma=gamma, posterior_h1=h1,
            pis0_hat=expit(Xe @ zeta), rho_hat=expit(Xg @ gamma),
            loglik_trace=trace, converged=converged, iterations=iters, seed=seed,
            status=_STATUS.get(status, "unknown"), expert_cols=names_e, gating_cols=names_g,
            start=start, n_starts=n_starts,
        )

    if np.all(P1 == 1.0):
        # every unit followed the rule: the expert is not identified
        zeta = np.zeros(Xe.shape[1])
        gamma = np.zeros(Xg.shape[1])
        trace = np.array([em_loglik(data, spec, r, zeta, gamma)])
        return finish(gamma, zeta, 0, _kernels.GATING_COLLAPSE, trace, np.ones(data.n), 0, False)

    best = None
    failures = []
    k = 0
    while k < n_starts or (best is not None and not best.converged and k < n_starts + max_restarts) \
            or (best is None and k < n_starts + max_restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        zeta0 = rng.normal(0.0, init_sd, size=Xe.shape[1])
        gamma, zeta, iters, status, trace, h1 = _single_start(XgT, XeT, a, P1, zeta0, tol, max_iter)
        k += 1
        if status in _FAILED:
            # the M-step IRLS ran out of iterations, typically because the
            # weighted expert data are separable and the coefficients diverge
            node = "gating" if status == _kernels.GATING_FAILED else "expert"
            failures.append(f"{node} M-step IRLS failed at EM iteration {iters} (start {k - 1})")
            continue
        fit = finish(gamma, zeta, iters, status, trace, h1, k - 1, status == _kernels.OK)
        if best is None or (fit.converged, fit.loglik) > (best.converged, best.loglik):
            best = fit
    if best is None:
        raise ConvergenceError("; ".join(failures))
    return best
