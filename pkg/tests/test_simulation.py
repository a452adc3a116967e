import numpy as np
import pytest

from itreval.errors import ConfigError
from itreval.simulation import (ESTIMANDS, ScenarioConfig, SimStudyConfig, draw_population,
                                population_rng, random_orthogonal, run_study, summarize,
                                truth_from_population)


def test_orthogonal_dim_one():
    o = random_orthogonal(1, np.random.default_rng(0))
    assert o.shape == (1, 1) and abs(o[0, 0]) == 1.0


def test_orthogonality():
    rng = np.random.default_rng(1)
    for dim in (2, 6, 15):
        o = random_orthogonal(dim, rng)
        assert np.max(np.abs(o.T @ o - np.eye(dim))) < 1e-12


def test_haar_column_means():
    rng = np.random.default_rng(2)
    draws = np.array([random_orthogonal(6, rng) for _ in range(10_000)])
    # entries of a Haar matrix have mean 0 and variance 1/dim
    se = np.sqrt(1 / 6 / 10_000)
    assert np.max(np.abs(draws.mean(axis=0))) < 4 * se


def test_orthogonal_rejects_bad_dim():
    with pytest.raises(ConfigError):
        random_orthogonal(0, np.random.default_rng(0))


@pytest.fixture(scope="module")
def big_population():
    cfg = ScenarioConfig("A", seed=4)
    return cfg, draw_population(cfg, 1_000_000, population_rng(cfg))


def test_covariate_margins_and_spectrum(big_population):
    cfg, pop = big_population
    x1 = pop.X[:, 1]
    assert abs(x1.mean() - 0.5) < 4 * np.sqrt(0.25 / pop.size)
    np.testing.assert_array_equal(pop.X[:, 0], 1.0)
    eig = np.sort(np.linalg.eigvalsh(np.cov(pop.latent, rowvar=False)))
    np.testing.assert_allclose(eig, cfg.eigenvalues, atol=0.02)


def test_consistency_rows(big_population):
    _, pop = big_population
    assert np.array_equal(pop.Y, pop.A * pop.Y_a1 + (1 - pop.A) * pop.Y_a0)
    assert np.array_equal(pop.A, pop.S * pop.A_s1 + (1 - pop.S) * pop.A_s0)
    assert np.array_equal(pop.Y_s1, pop.r * pop.Y_a1 + (1 - pop.r) * pop.Y_a0)


def test_additive_identity_on_population(big_population):
    _, pop = big_population
    t = truth_from_population(pop)
    assert t["ARE"] == pytest.approx(t["AIE"] + t["MIG"], abs=1e-15)
    assert np.array_equal(pop.Y_s1 - pop.Y_s0, (pop.Y - pop.Y_s0) + (pop.Y_s1 - pop.Y))


def test_scenario_zeta():
    np.testing.assert_array_equal(ScenarioConfig("A").zeta, ScenarioConfig("A").delta)
    np.testing.assert_array_equal(ScenarioConfig("B").zeta, np.zeros(7))
    np.testing.assert_array_equal(ScenarioConfig("C").zeta, -np.array(ScenarioConfig("C").delta))
    with pytest.raises(ConfigError):
        ScenarioConfig("D")
    with pytest.raises(ConfigError):
        ScenarioConfig("A", gamma=(1.0,))


def test_orthogonal_matrix_follows_seed():
    assert np.array_equal(ScenarioConfig("A", 3).orthogonal_matrix(), ScenarioConfig("C", 3).orthogonal_matrix())
    assert not np.array_equal(ScenarioConfig("A", 3).orthogonal_matrix(), ScenarioConfig("A", 4).orthogonal_matrix())


def test_study_config_validation():
    with pytest.raises(ConfigError):
        SimStudyConfig(n=10)
    with pytest.raises(ConfigError):
        SimStudyConfig(iterations=0)
    with pytest.raises(ConfigError):
        SimStudyConfig(columns="other")


def test_summarize_identity():
    rng = np.random.default_rng(0)
    est = rng.normal(0.1, 0.3, 57)
    m = summarize(est, 0.05, est - 0.2, est + 0.3)
    M = len(est)
    assert m.rmse ** 2 == pytest.approx(m.bias ** 2 + (M - 1) / M * m.empirical_se ** 2, rel=1e-12)
    assert m.rmse >= abs(m.bias)
    assert 0 <= m.coverage <= 1 and m.ci_width == pytest.approx(0.5)
    assert m.relative_bias == pytest.approx(m.bias / 0.05)


@pytest.fixture(scope="module")
def small_study():
    cfg = SimStudyConfig(ScenarioConfig("B", seed=5), n=300, iterations=6, boot_B=20, pop_size=200_000)
    return cfg, run_study(cfg)


def test_study_is_deterministic(small_study):
    cfg, res = small_study
    again = run_study(cfg, threads=3)
    assert np.array_equal(res.estimates, again.estimates)
    assert np.array_equal(res.ci_low, again.ci_low)
    assert res.metrics == again.metrics


def test_study_outputs(small_study):
    cfg, res = small_study
    assert res.estimates.shape == (6, 3)
    rows = res.table_rows()
    assert [r[0] for r in rows][0] == "true_value" and len(rows) == 7
    for k in ESTIMANDS:
        m = res.metrics[k]
        assert m.rmse >= abs(m.bias) and 0 <= m.coverage <= 1
    it = res.iteration_rows()
    assert len(it) == 6 and {"MIG", "ARE_ci_low", "AIE_ci_high"} <= set(it[0])
    assert np.all(res.ci_low <= res.ci_high)
