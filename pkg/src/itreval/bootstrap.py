"""Nonparametric bootstrap over units with percentile intervals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ._parallel import ordered_map
from .data import Dataset
from .errors import BootstrapError, ConfigError, DataError, NumericalError

MAX_FAILED_FRACTION = 0.05

Pipeline = Callable[[Dataset, int], Mapping[str, float]]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    replicates: np.ndarray
    B: int
    ci_level: float
    ci_low: float
    ci_high: float
    n_failed: int

    def to_dict(self) -> dict:
        return {"B": self.B, "ci_level": self.ci_level, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "n_failed": self.n_failed}


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    """Generator of replicate ``b``; depends only on (seed, b)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))


def percentile_interval(values: np.ndarray, level: float) -> tuple[float, float]:
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


class _Replicate:
    def __init__(self, data: Dataset, pipeline: Pipeline, seed: int):
        self.data, self.pipeline, self.seed = data, pipeline, seed

    def __call__(self, b: int):
        rng = replicate_rng(self.seed, b)
        idx = rng.integers(0, self.data.n, size=self.data.n)
        fit_seed = int(rng.integers(0, 2**63 - 1))
        # diagnostics such as overlap warnings concern the original sample;
        # silencing them here also keeps output independent of worker count
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                return dict(self.pipeline(self.data.take(idx), fit_seed))
            except (NumericalError, DataError):
                return None


def bootstrap(data: Dataset, pipeline: Pipeline, B: int = 999, level: float = 0.95,
              seed: int = 0, threads: int | None = 1) -> dict[str, BootstrapResult]:
    """Refit ``pipeline`` on B resamples and form percentile intervals per key.

    ``pipeline(resample, fit_seed)`` returns a mapping of named estimates.
    Replicates that raise a numerical or data error are dropped and counted;
    more than 5% dropped is an error.
    """
    if B < 1:
        raise ConfigError("B must be >= 1")
    if not 0.0 < level < 1.0:
        raise ConfigError("confidence level must lie in (0, 1)")
    results = ordered_map(_Replicate(data, pipeline, seed), range(B), threads)
    ok = [r for r in results if r is not None]
    n_failed = B - len(ok)
    if not ok:
        raise BootstrapError(f"all {B} bootstrap replicates failed")
    if n_failed > MAX_FAILED_FRACTION * B:
        raise BootstrapError(f"{n_failed} of {B} bootstrap replicates failed (limit 5%)")
    out = {}
    for key in ok[0]:
        reps = np.array([r[key] for r in ok], dtype=float)
        lo, hi = percentile_interval(reps, level)
        out[key] = BootstrapResult(reps, B, level, lo, hi, n_failed)
    return out


def bootstrap_ci(data: Dataset, pipeline: Callable[[Dataset], float], B: int = 999,
                 level: float = 0.95, seed: int = 0, threads: int | None = 1) -> BootstrapResult:
    """Scalar version of :func:`bootstrap`; ``pipeline(resample)`` returns one number."""
    return bootstrap(data, _Scalar(pipeline), B, level, seed, threads)["value"]


class _Scalar:
    def __init__(self, func):
        self.func = func

    def __call__(self, data, fit_seed):
        return {"value": float(self.func(data))}
