import numpy as np
import pytest

from itreval.data import Dataset
from itreval.glm import expit
from itreval.simulation import ScenarioConfig, draw_population

ACCEPTANCE_LINES: list[str] = []


def scenario_sample(scenario: str, n: int, seed: int):
    """Direct draw of ``n`` units (no finite population); returns (data, population)."""
    cfg = ScenarioConfig(scenario, seed=seed)
    pop = draw_population(cfg, n, np.random.default_rng(seed + 1000))
    data = pop.observed().with_columns({"_rule": pop.r})
    return data, pop


def new_rule_sample(n: int, seed: int):
    """Logistic treatment and outcome models in three Gaussian covariates.

    Returns the dataset (with a ``rule`` column) and the true per-unit
    (pi, mu0, mu1).
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    pi = expit(0.3 + X @ np.array([0.5, -0.4, 0.2]))
    mu0 = expit(-0.2 + X @ np.array([0.3, 0.1, -0.2]))
    mu1 = expit(0.1 + X @ np.array([-0.2, 0.4, 0.1]))
    A = (rng.random(n) < pi).astype(float)
    Y = np.where(A == 1, rng.random(n) < mu1, rng.random(n) < mu0).astype(float)
    rule = (X @ np.array([1.0, -1.0, 0.5]) < 0).astype(float)
    data = Dataset(np.column_stack([X, rule]), ("a", "b", "c", "rule"), A, Y)
    return data, (pi, mu0, mu1)


@pytest.fixture(scope="session")
def scenario_a_20k():
    return scenario_sample("A", 20_000, 11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
