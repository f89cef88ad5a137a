import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score, roc_auc_score

from oracles import auc_pr_cuts, auc_roc_pairs
from procoutcome.metrics import REPORT_COLUMNS, MetricsReport, auc_pr, auc_roc, f1_accuracy


def test_auc_roc_examples():
    assert auc_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auc_roc([0.5, 0.5], [0, 1]) == 0.5
    assert auc_roc([0.3, 0.4], [1, 1]) is None
    assert auc_roc([0.3, 0.4], [0, 0]) is None


def test_auc_pr_examples():
    assert auc_pr([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_pr([0.5] * 5, [1, 0, 0, 1, 0]) == 0.4
    assert auc_pr([0.5, 0.2], [0, 0]) is None


def test_f1_accuracy_examples():
    assert f1_accuracy([0.9, 0.1], [1, 0]) == (1.0, 1.0)
    f1, acc = f1_accuracy([0.1, 0.2, 0.3, 0.4], [1, 0, 0, 0])
    assert f1 is None and acc == 0.75
    assert f1_accuracy([0.1, 0.9], [1, 0]) == (None, 0.0)
    assert f1_accuracy([0.5], [1]) == (1.0, 1.0)  # threshold is inclusive


def test_report_csv():
    r = MetricsReport.from_scores([0.1, 0.2, 0.3], [0, 0, 1])
    lines = r.to_csv().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1].split(",")[REPORT_COLUMNS.index("n_positive")] == "1"
    assert r.n_positive <= r.n_examples
    none = MetricsReport.from_scores([0.1, 0.2], [1, 1])
    assert none.csv_row()[0] == ""


def test_input_validation():
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        auc_roc([0.1], [0, 1])
    with pytest.raises(ValueError):
        auc_roc([float("nan"), 0.1], [0, 1])


tied_instances = st.integers(2, 200).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6).map(lambda k: k / 6), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


@settings(max_examples=300, deadline=None)
@given(tied_instances)
def test_oracles_exact_with_heavy_ties(inst):
    s, y = inst
    assert auc_roc(s, y) == auc_roc_pairs(s, y)
    assert auc_pr(s, y) == auc_pr_cuts(s, y)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=60), st.data())
def test_auc_invariants(s, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(s), max_size=len(s)))
    a = auc_roc(s, y)
    if a is None:
        return
    t = [math.atan(v / 100) * 7 + 3 for v in s]
    # only meaningful while rounding keeps the transform strictly monotone
    if all(np.sign(a1 - a2) == np.sign(b1 - b2) for a1, b1 in zip(s, t) for a2, b2 in zip(s, t)):
        assert auc_roc(t, y) == a
    assert auc_roc(s, [1 - t for t in y]) + a == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= a <= 1.0
    assert 0.0 <= auc_pr(s, y) <= 1.0


def test_agrees_with_sklearn_on_distinct_scores():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(5, 100))
        s = rng.random(n)
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        assert auc_roc(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-12)
        assert auc_pr(s, y) == pytest.approx(average_precision_score(y, s), abs=1e-12)


def test_constant_scorer_pr_is_base_rate():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 37)
    assert auc_pr(np.full(37, 0.3), y) == pytest.approx(y.mean(), abs=1e-15)
