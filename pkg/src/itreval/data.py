"""Observational dataset, column roles and linear treatment rules."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

INTERCEPT = "_intercept"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n units with named covariates, a binary treatment and a binary outcome.

    The covariate matrix always carries an all-ones ``_intercept`` column in
    first position. Arrays are read-only once the dataset is built.
    """

    covariates: np.ndarray
    columns: tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=float)
        cols = tuple(self.columns)
        if cov.ndim != 2 or cov.shape[1] != len(cols):
            raise DataError(f"covariate matrix shape {cov.shape} does not match {len(cols)} column names")
        if len(set(cols)) != len(cols):
            dup = sorted({c for c in cols if cols.count(c) > 1})
            raise DataError(f"duplicate column name(s): {', '.join(dup)}")
        if INTERCEPT not in cols:
            cov = np.column_stack([np.ones(cov.shape[0]), cov])
            cols = (INTERCEPT,) + cols
        elif not np.all(cov[:, cols.index(INTERCEPT)] == 1.0):
            raise DataError(f"column {INTERCEPT!r} must be all ones")
        a = np.asarray(self.treatment, dtype=float).ravel()
        y = np.asarray(self.outcome, dtype=float).ravel()
        n = cov.shape[0]
        if n == 0:
            raise DataError("no units")
        if a.shape[0] != n or y.shape[0] != n:
            raise DataError("treatment/outcome length does not match the covariate rows")
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates contain missing or non-finite values")
        for name, v in (("treatment", a), ("outcome", y)):
            bad = np.flatnonzero((v != 0.0) & (v != 1.0))
            if bad.size:
                raise DataError(f"{name} must be 0/1; row {bad[0] + 1} has {v[bad[0]]!r}")
        object.__setattr__(self, "covariates", _frozen(cov))
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "treatment", _frozen(a))
        object.__setattr__(self, "outcome", _frozen(y))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.covariates[:, self.columns.index(name)]
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Columns ``names`` in the given order, nothing prepended."""
        idx = []
        for name in names:
            try:
                idx.append(self.columns.index(name))
            except ValueError:
                raise DataError(f"unknown column {name!r}") from None
        return self.covariates[:, idx]

    def design(self, names: Sequence[str]) -> np.ndarray:
        """Design matrix for a model on ``names``, with the intercept first."""
        names = [c for c in names if c != INTERCEPT]
        return self.matrix([INTERCEPT, *names])

    def take(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.covariates[index], self.columns, self.treatment[index], self.outcome[index])

    def with_columns(self, extra: Mapping[str, np.ndarray]) -> "Dataset":
        cov = np.column_stack([self.covariates, *[np.asarray(v, dtype=float) for v in extra.values()]])
        return Dataset(cov, self.columns + tuple(extra), self.treatment, self.outcome)


@dataclass(frozen=True)
class ColumnSpec:
    """Covariate subsets for each nuisance model; the intercept is implicit.

    ``gating_cols`` feed the implementation (gating) model and ``expert_cols``
    the treatment model in the absence of rule implementation.
    """

    mu_cols: tuple[str, ...] = ()
    pi_cols: tuple[str, ...] = ()
    gating_cols: tuple[str, ...] = ()
    expert_cols: tuple[str, ...] = ()

    def __post_init__(self):
        for f in ("mu_cols", "pi_cols", "gating_cols", "expert_cols"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    def validate(self, data: Dataset) -> None:
        for role in ("mu_cols", "pi_cols", "gating_cols", "expert_cols"):
            for c in getattr(self, role):
                if c not in data.columns:
                    raise DataError(f"{role}: unknown column {c!r}")


@dataclass(frozen=True, eq=False)
class LinearRule:
    """Deterministic rule r(x) = 1{delta' x < 0} over named columns."""

    columns: tuple[str, ...]
    delta: np.ndarray = field(repr=True)

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float).ravel()
        cols = tuple(self.columns)
        if d.shape[0] != len(cols):
            raise ConfigError(f"rule has {len(cols)} columns but {d.shape[0]} coefficients")
        if not np.all(np.isfinite(d)):
            raise ConfigError("rule coefficients must be finite")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "delta", _frozen(d))

    @classmethod
    def from_mapping(cls, coefficients: Mapping[str, float]) -> "LinearRule":
        return cls(tuple(coefficients), np.array([float(v) for v in coefficients.values()]))

    @classmethod
    def from_json(cls, path: str | Path) -> "LinearRule":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"rule file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"rule file {path} is not valid JSON: {exc}") from None
        coefs = doc.get("coefficients") if isinstance(doc, dict) else None
        if not isinstance(coefs, dict) or not coefs:
            raise ConfigError(f"rule file {path} needs a non-empty 'coefficients' object")
        return cls.from_mapping(coefs)

    def to_dict(self) -> dict:
        return {"coefficients": {c: float(v) for c, v in zip(self.columns, self.delta)}}


def evaluate_rule(rule: LinearRule, data: Dataset) -> np.ndarray:
    """Per-unit recommendation, 1 where delta' x < 0 (ties give 0)."""
    score = data.matrix(rule.columns) @ rule.delta
    return (score < 0).astype(np.int64)


def as_recommendation(rule: LinearRule | np.ndarray, data: Dataset) -> np.ndarray:
    """Accept a LinearRule or a precomputed 0/1 vector."""
    if isinstance(rule, LinearRule):
        return evaluate_rule(rule, data)
    rec = np.asarray(rule)
    if rec.shape != (data.n,):
        raise DataError(f"recommendation vector has shape {rec.shape}, expected ({data.n},)")
    if not np.all((rec == 0) | (rec == 1)):
        raise DataError("recommendation vector must be 0/1")
    return rec.astype(np.int64)


def load_csv(path: str | Path, treatment: str, outcome: str,
             covariates: Iterable[str] | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    Every column other than ``treatment`` and ``outcome`` becomes a covariate
    unless ``covariates`` restricts the selection. Row numbers in error
    messages count data rows from 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file (no header row)") from None
        rows = [row for row in reader if row]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate column name(s): {', '.join(dup)}")
    if INTERCEPT in header:
        raise DataError(f"column name {INTERCEPT!r} is reserved")
    for role, name in (("treatment", treatment), ("outcome", outcome)):
        if name not in header:
            raise DataError(f"{role} column {name!r} not in header")
    if covariates is None:
        cov_names = [h for h in header if h not in (treatment, outcome)]
    else:
        cov_names = list(covariates)
        for c in cov_names:
            if c not in header:
                raise DataError(f"covariate column {c!r} not in header")
    if not rows:
        raise DataError(f"{path}: no units")

    pos = {h: i for i, h in enumerate(header)}
    wanted = [treatment, outcome, *cov_names]
    values = np.empty((len(rows), len(wanted)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} cells, found {len(row)}")
        for j, name in enumerate(wanted):
            cell = row[pos[name]].strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                raise DataError(f"row {r}: missing value in column {name!r}")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {r}: non-numeric value {cell!r} in column {name!r}") from None
            if not math.isfinite(v):
                raise DataError(f"row {r}: non-finite value in column {name!r}")
            if j < 2 and v not in (0.0, 1.0):
                raise DataError(f"row {r}: {name!r} must be 0 or 1, found {cell!r}")
            values[r - 1, j] = v
    return Dataset(values[:, 2:], tuple(cov_names), values[:, 0], values[:, 1])


def write_csv(data: Dataset, path: str | Path, treatment: str = "A", outcome: str = "Y") -> None:
    """Inverse of :func:`load_csv`; reals are written with 17 significant digits."""
    names = [c for c in data.columns if c != INTERCEPT]
    cov = data.matrix(names)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, treatment, outcome])
        for i in range(data.n):
            w.writerow([*(f"{v:.17g}" for v in cov[i]), int(data.treatment[i]), int(data.outcome[i])])
