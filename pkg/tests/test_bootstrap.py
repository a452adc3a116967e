import numpy as np
import pytest

from itreval.bootstrap import bootstrap, bootstrap_ci, percentile_interval
from itreval.data import Dataset
from itreval.errors import BootstrapError, ConfigError, ConvergenceError


def _bern(n, seed):
    rng = np.random.default_rng(seed)
    return Dataset(np.zeros((n, 1)), ("x",), rng.integers(0, 2, n), rng.integers(0, 2, n))


def mean_y(d):
    return float(np.mean(d.outcome))


def test_constant_pipeline():
    res = bootstrap_ci(_bern(30, 0), lambda d: 0.25, B=50, seed=1)
    assert res.ci_low == res.ci_high == 0.25
    assert len(res.replicates) == 50 and res.n_failed == 0


def test_same_seed_same_replicates():
    d = _bern(100, 1)
    a = bootstrap_ci(d, mean_y, B=80, seed=9)
    b = bootstrap_ci(d, mean_y, B=80, seed=9)
    assert np.array_equal(a.replicates, b.replicates)
    c = bootstrap_ci(d, mean_y, B=80, seed=10)
    assert not np.array_equal(a.replicates, c.replicates)


def test_mean_width_matches_normal_approximation():
    res = bootstrap_ci(_bern(500, 2), mean_y, B=999, level=0.95, seed=3)
    assert res.ci_high - res.ci_low == pytest.approx(2 * 1.959964 * np.sqrt(0.25 / 500), rel=0.25)
    assert res.ci_low <= res.ci_high
    assert res.replicates.min() <= res.ci_low and res.ci_high <= res.replicates.max()


def test_percentile_order_statistics():
    # linear interpolation between order statistics at position (B - 1) p
    v = np.array([5.0, 1.0, 4.0, 2.0, 3.0, 10.0, 7.0, 6.0, 9.0, 8.0])
    lo, hi = percentile_interval(v, 0.8)
    s = np.sort(v)
    pos_lo, pos_hi = 9 * 0.1, 9 * 0.9
    assert lo == pytest.approx(s[0] + (pos_lo - 0) * (s[1] - s[0]))
    assert hi == pytest.approx(s[8] + (pos_hi - 8) * (s[9] - s[8]))


def test_threads_do_not_change_results():
    d = _bern(200, 4)
    one = bootstrap_ci(d, mean_y, B=60, seed=5, threads=1)
    four = bootstrap_ci(d, mean_y, B=60, seed=5, threads=4)
    assert np.array_equal(one.replicates, four.replicates)


class _Flaky:
    """Fails on roughly one replicate in ``every`` (decided by the fit seed)."""

    def __init__(self, every):
        self.every = every

    def __call__(self, data, fit_seed):
        if fit_seed % self.every == 0:
            raise ConvergenceError("synthetic failure")
        return {"m": float(np.mean(data.outcome))}


def test_failures_counted():
    d = _bern(50, 6)
    res = bootstrap(d, _Flaky(10**9), B=40, seed=0)["m"]
    assert res.n_failed == 0
    res = bootstrap(d, _Flaky(50), B=200, seed=0)["m"]
    assert 0 < res.n_failed <= 10
    assert len(res.replicates) == res.B - res.n_failed


def test_too_many_failures():
    with pytest.raises(BootstrapError, match="limit 5%"):
        bootstrap(_bern(50, 7), _Flaky(2), B=100, seed=0)
    with pytest.raises(BootstrapError, match="all"):
        bootstrap(_bern(50, 7), _Flaky(1), B=10, seed=0)


def test_argument_validation():
    with pytest.raises(ConfigError):
        bootstrap_ci(_bern(10, 8), mean_y, B=0)
    with pytest.raises(ConfigError):
        bootstrap_ci(_bern(10, 8), mean_y, B=5, level=1.0)
