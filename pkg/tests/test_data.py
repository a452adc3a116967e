import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from itreval.data import (INTERCEPT, ColumnSpec, Dataset, LinearRule, evaluate_rule, load_csv,
                          write_csv)
from itreval.errors import ConfigError, DataError
from itreval.simulation import DELTA

from conftest import scenario_sample


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    d = load_csv(_write(tmp_path, "x1,a,y\n0.5,1,0\n-1,0,1\n2,1,1\n"), "a", "y")
    assert d.n == 3 and d.p == 2
    assert d.columns == (INTERCEPT, "x1")
    np.testing.assert_array_equal(d.column("x1"), [0.5, -1, 2])
    np.testing.assert_array_equal(d.treatment, [1, 0, 1])
    np.testing.assert_array_equal(d.column(INTERCEPT), 1.0)


def test_non_binary_treatment_names_row(tmp_path):
    rows = "".join(f"{i},1,0\n" for i in range(4)) + "4,2,0\n"
    with pytest.raises(DataError, match="row 5"):
        load_csv(_write(tmp_path, "x1,a,y\n" + rows), "a", "y")


def test_header_only_has_no_units(tmp_path):
    with pytest.raises(DataError, match="no units"):
        load_csv(_write(tmp_path, "x1,a,y\n"), "a", "y")


@pytest.mark.parametrize("text, match", [
    ("x1,a,y\n1,,0\n", "row 1: missing"),
    ("x1,a,y\nNA,1,0\n", "missing"),
    ("x1,a,y\nabc,1,0\n", "non-numeric"),
    ("x1,x1,a,y\n1,1,1,0\n", "duplicate"),
    ("x1,a,y\n1,1,0.5\n", "must be 0 or 1"),
    ("x1,a,y\n1,1\n", "expected 3 cells"),
    ("_intercept,a,y\n1,1,0\n", "reserved"),
])
def test_load_rejects(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_csv(_write(tmp_path, text), "a", "y")


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv", "a", "y")


def test_covariate_selection(tmp_path):
    d = load_csv(_write(tmp_path, "x1,x2,a,y\n1,2,1,0\n3,4,0,1\n"), "a", "y", covariates=["x2"])
    assert d.columns == (INTERCEPT, "x2")
    with pytest.raises(DataError, match="not in header"):
        load_csv(_write(tmp_path, "x1,a,y\n1,1,0\n"), "a", "y", covariates=["zz"])


def test_dataset_invariants():
    d = Dataset(np.array([[1.0], [2.0]]), ("x",), [0, 1], [1, 1])
    assert d.columns[0] == INTERCEPT
    with pytest.raises(ValueError):
        d.covariates[0, 0] = 5.0
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [2.0]]), ("x",), [0, 2], [1, 1])
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [np.nan]]), ("x",), [0, 1], [1, 1])
    with pytest.raises(DataError):
        Dataset(np.ones((2, 2)), ("x", "x"), [0, 1], [1, 1])
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [2.0]]), (INTERCEPT,), [0, 1], [1, 1])


def test_column_spec_unknown_column():
    d = Dataset(np.ones((2, 1)), ("x",), [0, 1], [1, 0])
    with pytest.raises(DataError, match="unknown column"):
        ColumnSpec(mu_cols=("z",)).validate(d)


def test_rule_sign_and_tie():
    d = Dataset(np.array([[-2.0], [0.0], [3.0]]), ("x1",), [0, 1, 0], [1, 0, 0])
    rule = LinearRule((INTERCEPT, "x1"), [0.0, 1.0])
    np.testing.assert_array_equal(evaluate_rule(rule, d), [1, 0, 0])


def test_rule_unknown_column():
    d = Dataset(np.ones((2, 1)), ("x1",), [0, 1], [1, 0])
    with pytest.raises(DataError):
        evaluate_rule(LinearRule(("x9",), [1.0]), d)


def test_rule_matches_scalar_loop():
    data, _ = scenario_sample("A", 2000, 3)
    cols = (INTERCEPT, "x1", "x2", "x3", "x4", "x5", "x6")
    rule = LinearRule(cols, DELTA)
    X = data.matrix(cols)
    expected = []
    for row in X:
        s = 0.0
        for coef, x in zip(DELTA, row):
            s += coef * x
        expected.append(1 if s < 0 else 0)
    np.testing.assert_array_equal(evaluate_rule(rule, data), expected)


def test_rule_json(tmp_path):
    p = _write(tmp_path, '{"coefficients": {"_intercept": 0.5, "x1": -1}}', "r.json")
    rule = LinearRule.from_json(p)
    assert rule.columns == (INTERCEPT, "x1")
    assert LinearRule.from_mapping(rule.to_dict()["coefficients"]).delta.tolist() == [0.5, -1.0]
    with pytest.raises(ConfigError):
        LinearRule.from_json(_write(tmp_path, '{"coef": {}}', "bad.json"))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (20, 2), elements=st.floats(-5, 5)),
       st.permutations(list(range(20))))
def test_rule_permutation_equivariant(X, perm):
    d = Dataset(X, ("u", "v"), np.zeros(20), np.zeros(20))
    rule = LinearRule((INTERCEPT, "u", "v"), [0.1, 1.0, -2.0])
    perm = np.array(perm)
    np.testing.assert_array_equal(evaluate_rule(rule, d.take(perm)), evaluate_rule(rule, d)[perm])


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (7, 3), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
       hnp.arrays(np.int64, 7, elements=st.integers(0, 1)),
       hnp.arrays(np.int64, 7, elements=st.integers(0, 1)))
def test_csv_round_trip(tmp_path_factory, X, a, y):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    d = Dataset(X, ("p", "q", "r"), a, y)
    write_csv(d, path)
    back = load_csv(path, "A", "Y")
    assert back.columns == d.columns
    np.testing.assert_array_equal(back.covariates, d.covariates)
    np.testing.assert_array_equal(back.treatment, d.treatment)
    np.testing.assert_array_equal(back.outcome, d.outcome)
