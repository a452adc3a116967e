"""Monte Carlo study of the partial-regime estimators.

Covariates: six latent Gaussians with covariance O diag(lambda) O' (O a
random orthogonal matrix fixed by the master seed), of which the first two
are dichotomized at zero, the next three exponentiated, the last kept as is.
Coefficient vectors are ordered (intercept, x1, ..., x6).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import ordered_map
from .analysis import PartialAnalysis
from .bootstrap import bootstrap
from .data import ColumnSpec, Dataset
from .errors import ConfigError, ItrevalError
from .glm import expit

COVARIATES = ("x1", "x2", "x3", "x4", "x5", "x6")
ESTIMANDS = ("MIG", "ARE", "AIE")
ESTIMATOR_KEYS = {"MIG": "MIG:Q", "ARE": "ARE:ME", "AIE": "AIE:ME"}

EIGENVALUES = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
GAMMA = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
DELTA = (0.05, -0.5, 0.5, -0.5, 0.5, 0.0, 0.0)
ALPHA = (0.0, -0.3, -0.05, 0.5, -0.15, -0.2, 0.0)
BETA = (0.0, -0.2, 0.05, 0.3, -0.1, -0.1, 0.0)

# Model covariates. "literal" reads the subscripts of the model lists as the
# covariate names (mu on x2..x6, expert on x1..x5, gate on x6). "one-based"
# counts the 7-vector (X0, ..., X6) from 1, which lines every list up with the
# nonzero generating coefficients so that all working models are correct.
COLUMN_LAYOUTS = {
    "literal": ColumnSpec(mu_cols=("x2", "x3", "x4", "x5", "x6"),
                          pi_cols=COVARIATES,
                          gating_cols=("x6",),
                          expert_cols=("x1", "x2", "x3", "x4", "x5")),
    "one-based": ColumnSpec(mu_cols=("x1", "x2", "x3", "x4", "x5"),
                            pi_cols=COVARIATES,
                            gating_cols=("x6",),
                            expert_cols=("x1", "x2", "x3", "x4")),
}

# SeedSequence spawn keys under the master seed
_KEY_ORTHO, _KEY_POPULATION, _KEY_ITERATION = 0, 1, 2


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "A"
    seed: int = 0
    eigenvalues: tuple[float, ...] = EIGENVALUES
    gamma: tuple[float, ...] = GAMMA
    delta: tuple[float, ...] = DELTA
    alpha_coef: tuple[float, ...] = ALPHA
    beta_coef: tuple[float, ...] = BETA

    def __post_init__(self):
        if self.scenario not in ("A", "B", "C"):
            raise ConfigError(f"scenario must be A, B or C, got {self.scenario!r}")
        if len(self.eigenvalues) != 6 or min(self.eigenvalues) <= 0:
            raise ConfigError("need six positive eigenvalues")
        for name in ("gamma", "delta", "alpha_coef", "beta_coef"):
            if len(getattr(self, name)) != 7:
                raise ConfigError(f"{name} must have 7 entries (intercept first)")

    @property
    def zeta(self) -> np.ndarray:
        """Treatment model without implementation: delta, 0 or -delta."""
        sign = {"A": 1.0, "B": 0.0, "C": -1.0}[self.scenario]
        return sign * np.asarray(self.delta) + 0.0

    def orthogonal_matrix(self) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(_KEY_ORTHO,)))
        return random_orthogonal(len(self.eigenvalues), rng)

    def covariance(self) -> np.ndarray:
        O = self.orthogonal_matrix()
        return O @ np.diag(self.eigenvalues) @ O.T

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zeta"] = self.zeta.tolist()
        return d


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix.

    QR of a square standard Gaussian matrix, with the columns of Q flipped so
    that R has a positive diagonal (otherwise Q is not uniformly distributed).
    """
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True, eq=False)
class Population:
    X: np.ndarray  # (size, 7), intercept first
    latent: np.ndarray  # (size, 6), Gaussian draws before transformation
    S: np.ndarray
    r: np.ndarray
    A_s0: np.ndarray
    A_s1: np.ndarray
    A: np.ndarray
    Y_a0: np.ndarray
    Y_a1: np.ndarray
    Y_s0: np.ndarray
    Y_s1: np.ndarray
    Y: np.ndarray

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def observed(self, index=None) -> Dataset:
        """Dataset of (X, A, Y); implementation and potential outcomes stay hidden."""
        sl = slice(None) if index is None else index
        return Dataset(self.X[sl, 1:], COVARIATES, self.A[sl], self.Y[sl])


def draw_population(cfg: ScenarioConfig, size: int, rng: np.random.Generator) -> Population:
    lam = np.asarray(cfg.eigenvalues)
    O = cfg.orthogonal_matrix()
    # Z (O diag(sqrt(lambda)))' has covariance O diag(lambda) O'
    latent = rng.standard_normal((size, 6)) @ (O * np.sqrt(lam)).T
    X = np.empty((size, 7))
    X[:, 0] = 1.0
    X[:, 1:3] = latent[:, 0:2] < 0
    X[:, 3:6] = np.exp(latent[:, 2:5])
    X[:, 6] = latent[:, 5]

    def bern(eta):
        return (rng.random(size) < expit(eta)).astype(float)

    S = bern(X @ np.asarray(cfg.gamma))
    r = (X @ np.asarray(cfg.delta) < 0).astype(float)
    A_s0 = bern(X @ cfg.zeta)
    A_s1 = r
    A = S * A_s1 + (1 - S) * A_s0
    Y_a0 = bern(X @ np.asarray(cfg.alpha_coef))
    Y_a1 = bern(X @ np.asarray(cfg.beta_coef))
    Y_s0 = A_s0 * Y_a1 + (1 - A_s0) * Y_a0
    Y_s1 = A_s1 * Y_a1 + (1 - A_s1) * Y_a0
    Y = A * Y_a1 + (1 - A) * Y_a0
    return Population(X, latent, S, r, A_s0, A_s1, A, Y_a0, Y_a1, Y_s0, Y_s1, Y)


def population_rng(cfg: ScenarioConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_KEY_POPULATION,)))


def truth_from_population(pop: Population) -> dict[str, float]:
    return {
        "MIG": float(np.mean(pop.Y_s1 - pop.Y)),
        "ARE": float(np.mean(pop.Y_s1 - pop.Y_s0)),
        "AIE": float(np.mean(pop.Y - pop.Y_s0)),
    }


def mixture_residual(cfg: ScenarioConfig, pop: Population, bins: int = 10) -> float:
    """Binned check of pi(x) = rho(x) r(x) + {1 - rho(x)} pi0(x) on a population.

    Units are grouped by r and by deciles of the true rho and pi0; in each
    non-empty cell the observed treatment rate is compared with the mean of
    the mixture formula. Returns the unit-weighted mean absolute deviation.
    """
    rho = expit(pop.X @ np.asarray(cfg.gamma))
    pi0 = expit(pop.X @ cfg.zeta)
    mixture = rho * pop.r + (1 - rho) * pi0

    def decile(v):
        edges = np.quantile(v, np.linspace(0, 1, bins + 1)[1:-1])
        return np.searchsorted(edges, v, side="right")

    cell = (pop.r.astype(int) * bins + decile(rho)) * bins + decile(pi0)
    counts = np.bincount(cell)
    used = counts > 0
    diff = (np.bincount(cell, pop.A) - np.bincount(cell, mixture))[used] / counts[used]
    return float(np.sum(counts[used] * np.abs(diff)) / pop.size)


def ground_truth(cfg: ScenarioConfig, pop_size: int = 2_000_000,
                 rng: np.random.Generator | None = None) -> dict[str, float]:
    """Population averages of Y^{s=1} - Y (MIG), Y^{s=1} - Y^{s=0} (ARE), Y - Y^{s=0} (AIE)."""
    if pop_size < 100_000:
        raise ConfigError("pop_size must be at least 1e5")
    return truth_from_population(draw_population(cfg, pop_size, rng or population_rng(cfg)))


@dataclass(frozen=True)
class SimStudyConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    n: int = 800
    iterations: int = 200
    boot_B: int = 199
    pop_size: int = 2_000_000
    ci_level: float = 0.95
    columns: str = "literal"
    em_tol: float = 1e-6
    em_max_iter: int = 500
    em_restarts: int = 10

    def __post_init__(self):
        if self.n < 50:
            raise ConfigError("n must be >= 50")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.boot_B < 0:
            raise ConfigError("boot_B must be >= 0")
        if self.columns not in COLUMN_LAYOUTS:
            raise ConfigError(f"columns must be one of {sorted(COLUMN_LAYOUTS)}")
        if self.n > self.pop_size:
            raise ConfigError("sample size exceeds the population")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def pipeline(self) -> PartialAnalysis:
        return PartialAnalysis(
            COLUMN_LAYOUTS[self.columns], "_rule", propensity=False,
            em_options={"tol": self.em_tol, "max_iter": self.em_max_iter,
                        "max_restarts": self.em_restarts},
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d


@dataclass(frozen=True)
class EstimandMetrics:
    true_value: float
    mean_estimate: float
    bias: float
    relative_bias: float
    empirical_se: float
    rmse: float
    coverage: float | None
    ci_width: float | None


@dataclass(frozen=True)
class MetricsRow:
    MIG: EstimandMetrics
    ARE: EstimandMetrics
    AIE: EstimandMetrics

    def __getitem__(self, key: str) -> EstimandMetrics:
        return getattr(self, key)

    def to_dict(self) -> dict:
        return {k: asdict(self[k]) for k in ESTIMANDS}


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: SimStudyConfig
    truth: dict[str, float]
    metrics: MetricsRow
    estimates: np.ndarray  # (iterations, 3) in ESTIMANDS order
    ci_low: np.ndarray | None
    ci_high: np.ndarray | None
    n_boot_failed: np.ndarray | None

    def table_rows(self) -> list[list]:
        """Rows of (metric, MIG, ARE, AIE) in the layout of a results table."""
        out = []
        for metric in ("true_value", "relative_bias", "bias", "empirical_se", "rmse",
                       "coverage", "ci_width"):
            out.append([metric, *(getattr(self.metrics[k], metric) for k in ESTIMANDS)])
        return out

    def iteration_rows(self) -> list[dict]:
        rows = []
        for i in range(self.estimates.shape[0]):
            row = {"iteration": i}
            for j, k in enumerate(ESTIMANDS):
                row[k] = float(self.estimates[i, j])
                if self.ci_low is not None:
                    row[f"{k}_ci_low"] = float(self.ci_low[i, j])
                    row[f"{k}_ci_high"] = float(self.ci_high[i, j])
            rows.append(row)
        return rows


def summarize(estimates: np.ndarray, truth: float, ci_low=None, ci_high=None) -> EstimandMetrics:
    """Bias, ESE (divisor M-1), RMSE (divisor M), coverage and mean CI width."""
    est = np.asarray(estimates, dtype=float)
    m = est.shape[0]
    mean = float(np.mean(est))
    bias = mean - truth
    ese = float(np.std(est, ddof=1)) if m > 1 else 0.0
    rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
    coverage = width = None
    if ci_low is not None:
        lo, hi = np.asarray(ci_low), np.asarray(ci_high)
        coverage = float(np.mean((lo <= truth) & (truth <= hi)))
        width = float(np.mean(hi - lo))
    rel = bias / abs(truth) if truth != 0 else math.nan
    return EstimandMetrics(truth, mean, bias, rel, ese, rmse, coverage, width)


class _Iteration:
    """One Monte Carlo iteration; holds the population so forked workers share it."""

    def __init__(self, cfg: SimStudyConfig, pop: Population):
        self.cfg, self.pop = cfg, pop
        self.pipeline = cfg.pipeline()

    def __call__(self, i: int):
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_KEY_ITERATION, i)))
        idx = rng.choice(self.pop.size, size=cfg.n, replace=False)
        data = self.pop.observed(idx).with_columns({"_rule": self.pop.r[idx]})
        fit_seed, boot_seed = (int(s) for s in rng.integers(0, 2**63 - 1, size=2))
        try:
            est = self.pipeline(data, fit_seed)
            lo = hi = None
            n_failed = 0
            if cfg.boot_B > 0:
                res = bootstrap(data, self.pipeline, cfg.boot_B, cfg.ci_level, boot_seed, threads=1)
                lo = [res[ESTIMATOR_KEYS[k]].ci_low for k in ESTIMANDS]
                hi = [res[ESTIMATOR_KEYS[k]].ci_high for k in ESTIMANDS]
                n_failed = res["MIG:Q"].n_failed
        except ItrevalError as exc:
            raise type(exc)(f"simulation iteration {i}: {exc}") from exc
        return [est[ESTIMATOR_KEYS[k]] for k in ESTIMANDS], lo, hi, n_failed


def run_study(cfg: SimStudyConfig, threads: int | None = 1,
              population: Population | None = None) -> StudyResult:
    """Draw the population, estimate on ``iterations`` samples and aggregate.

    Iteration ``i`` depends only on (seed, i), so results do not depend on
    ``threads``.
    """
    pop = population if population is not None else draw_population(
        cfg.scenario, cfg.pop_size, population_rng(cfg.scenario))
    truth = truth_from_population(pop)
    results = ordered_map(_Iteration(cfg, pop), range(cfg.iterations), threads)
    estimates = np.array([r[0] for r in results])
    has_ci = cfg.boot_B > 0
    lo = np.array([r[1] for r in results]) if has_ci else None
    hi = np.array([r[2] for r in results]) if has_ci else None
    metrics = MetricsRow(**{
        k: summarize(estimates[:, j], truth[k],
                     lo[:, j] if has_ci else None, hi[:, j] if has_ci else None)
        for j, k in enumerate(ESTIMANDS)
    })
    return StudyResult(cfg, truth, metrics, estimates, lo, hi,
                       np.array([r[3] for r in results]) if has_ci else None)
