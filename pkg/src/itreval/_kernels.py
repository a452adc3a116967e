"""Compiled inner loops for IRLS and the two-expert EM.

Design matrices are passed transposed (k x n, C-contiguous) so the per-column
reductions vectorize. Status codes are shared with the Python wrappers.
"""

import math

import numpy as np
from numba import njit

PROB_FLOOR = 1e-12
ETA_LO = math.log(PROB_FLOOR / (1.0 - PROB_FLOOR))
ETA_HI = -ETA_LO
LOG_LO = math.log(PROB_FLOOR)
LOG_HI = math.log1p(-PROB_FLOOR)

OK = 0
MAX_ITER = 1
STALLED = 2
GATING_COLLAPSE = 3
GATING_FAILED = 4
EXPERT_FAILED = 5

_MAX_HALVINGS = 50
# reductions may be reordered; comparisons and transcendental calls stay IEEE
_FM = {"reassoc", "contract", "nsz", "arcp"}


@njit(cache=True, fastmath=_FM)
def _loglik_grad_hess(XT, y, w, beta, g, H, eta, r, v):
    """Clipped Bernoulli log-likelihood with its gradient and negative Hessian.

    Units whose fitted probability falls outside [1e-12, 1 - 1e-12] sit on the
    flat part of the clipped likelihood and contribute no curvature.
    """
    k, n = XT.shape
    for i in range(n):
        eta[i] = 0.0
    for j in range(k):
        b = beta[j]
        for i in range(n):
            eta[i] += XT[j, i] * b
    ll = 0.0
    for i in range(n):
        e_ = eta[i]
        if e_ < ETA_LO:
            ll += w[i] * (y[i] * LOG_LO + (1.0 - y[i]) * LOG_HI)
            r[i] = 0.0
            v[i] = 0.0
        elif e_ > ETA_HI:
            ll += w[i] * (y[i] * LOG_HI + (1.0 - y[i]) * LOG_LO)
            r[i] = 0.0
            v[i] = 0.0
        else:
            if e_ >= 0.0:
                ex = math.exp(-e_)
                softplus = e_ + math.log1p(ex)
                p = 1.0 / (1.0 + ex)
            else:
                ex = math.exp(e_)
                softplus = math.log1p(ex)
                p = ex / (1.0 + ex)
            ll += w[i] * (y[i] * e_ - softplus)
            r[i] = w[i] * (y[i] - p)
            v[i] = w[i] * p * (1.0 - p)
    for j in range(k):
        s = 0.0
        for i in range(n):
            s += XT[j, i] * r[i]
        g[j] = s
        for l in range(j + 1):
            s = 0.0
            for i in range(n):
                s += XT[j, i] * XT[l, i] * v[i]
            H[j, l] = s
            H[l, j] = s
    return ll


@njit(cache=True)
def irls(XT, y, w, beta0, tol, max_iter, ridge, trace):
    """Newton-Raphson on the weighted logistic likelihood with step-halving.

    Returns (beta, iterations, status, last_change, loglik, n_trace); ``trace``
    receives the log-likelihood of every accepted iterate.
    """
    k, n = XT.shape
    beta = beta0.copy()
    g = np.empty(k)
    H = np.empty((k, k))
    g_new = np.empty(k)
    H_new = np.empty((k, k))
    eta = np.empty(n)
    r = np.empty(n)
    v = np.empty(n)
    ll = _loglik_grad_hess(XT, y, w, beta, g, H, eta, r, v)
    trace[0] = ll
    n_trace = 1
    change = np.inf
    for it in range(1, max_iter + 1):
        # jitter relative to the curvature scale, so that a Hessian made tiny
        # by units near the clipping bounds still yields full Newton steps
        scale = 0.0
        for j in range(k):
            scale = max(scale, H[j, j])
        jitter = ridge * scale if scale > 0.0 else ridge
        for j in range(k):
            H[j, j] += jitter
        step = np.linalg.solve(H, g)
        smax = np.max(np.abs(step))
        if smax < tol:
            # quadratic convergence: the likelihood change is below rounding
            for j in range(k):
                beta[j] += step[j]
            return beta, it, OK, smax, ll, n_trace
        t = 1.0
        accepted = False
        slack = 1e-12 * max(1.0, abs(ll))
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * step
            ll_new = _loglik_grad_hess(XT, y, w, cand, g_new, H_new, eta, r, v)
            if ll_new >= ll - slack:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return beta, it, STALLED, change, ll, n_trace
        change = np.max(np.abs(cand - beta))
        beta = cand
        ll = ll_new
        g, g_new = g_new, g
        H, H_new = H_new, H
        trace[n_trace] = ll
        n_trace += 1
        if change < tol:
            return beta, it, OK, change, ll, n_trace
    return beta, max_iter, MAX_ITER, change, ll, n_trace


@njit(cache=True)
def _estep(XgT, XeT, A, P1, gamma, zeta, h1, h0):
    """Posterior node probabilities and the observed-data log-likelihood."""
    kg, n = XgT.shape
    ke = XeT.shape[0]
    ll = 0.0
    for i in range(n):
        s = 0.0
        for j in range(kg):
            s += XgT[j, i] * gamma[j]
        g1 = 1.0 / (1.0 + math.exp(-s)) if s >= 0.0 else math.exp(s) / (1.0 + math.exp(s))
        g1 = min(max(g1, PROB_FLOOR), 1.0 - PROB_FLOOR)
        s = 0.0
        for j in range(ke):
            s += XeT[j, i] * zeta[j]
        p0 = 1.0 / (1.0 + math.exp(-s)) if s >= 0.0 else math.exp(s) / (1.0 + math.exp(s))
        P0 = p0 if A[i] == 1.0 else 1.0 - p0
        P0 = max(P0, PROB_FLOOR)
        num1 = g1 * P1[i]
        num0 = (1.0 - g1) * P0
        den = num1 + num0
        h1[i] = num1 / den
        h0[i] = num0 / den
        ll += math.log(den)
    return ll


@njit(cache=True)
def em(XgT, XeT, A, P1, zeta0, tol, max_iter, irls_tol, irls_max_iter, ridge, trace, h1):
    """EM for pi(x) = rho(x) r(x) + (1 - rho(x)) pi0(x) with r known.

    Gating starts at gamma = 0 (prior 1/2 on each node). ``trace`` receives the
    log-likelihood at the start and after every iteration; ``h1`` the posterior
    of the rule node at the returned parameters.
    Returns (gamma, zeta, iterations, status, last_change).
    """
    kg, n = XgT.shape
    gamma = np.zeros(kg)
    zeta = zeta0.copy()
    ones = np.ones(n)
    h0 = np.empty(n)
    itrace = np.empty(irls_max_iter + 1)
    trace[0] = _estep(XgT, XeT, A, P1, gamma, zeta, h1, h0)
    change = np.inf
    for it in range(1, max_iter + 1):
        if np.sum(h0) < 1e-8:
            return gamma, zeta, it - 1, GATING_COLLAPSE, change
        gamma, _, st, _, _, _ = irls(XgT, h1, ones, gamma, irls_tol, irls_max_iter, ridge, itrace)
        if st == MAX_ITER:
            return gamma, zeta, it, GATING_FAILED, change
        zeta_new, _, st, _, _, _ = irls(XeT, A, h0, zeta, irls_tol, irls_max_iter, ridge, itrace)
        if st == MAX_ITER:
            return gamma, zeta, it, EXPERT_FAILED, change
        change = np.max(np.abs(zeta_new - zeta))
        zeta = zeta_new
        trace[it] = _estep(XgT, XeT, A, P1, gamma, zeta, h1, h0)
        if change < tol:
            return gamma, zeta, it, OK, change
    return gamma, zeta, max_iter, MAX_ITER, change
