"""Evaluation of individualized treatment rules under full, partial or hypothetical implementation."""

from .data import ColumnSpec, Dataset, LinearRule, evaluate_rule, load_csv, write_csv
from .errors import (BootstrapError, ConfigError, ConvergenceError, DataError, ItrevalError,
                     NumericalError, RankDeficiencyError)
from .glm import GlmFit, irls_fit
from .em import EmFit, em_fit
from .schemes import SchemeSpec
from .bootstrap import BootstrapResult, bootstrap, bootstrap_ci

__version__ = "0.1.0"
