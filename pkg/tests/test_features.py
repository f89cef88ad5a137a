import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_log
from oracles import open_cases_brute
from procoutcome.errors import AllCasesDropped, NoOutcomeEvent, UnknownOutcomeActivity
from procoutcome.eventlog import RANGE, Feature
from procoutcome.experiments import SyntheticLogSpec, generate_synthetic_log, synthetic_rule
from procoutcome.features import (
    TIME_FEATURES,
    UNKNOWN_INDEX,
    ConstantFeatureWarning,
    LabelRule,
    LogEncoder,
    Standardizer,
    Vocabulary,
    apply_encoders,
    calendar_fields,
    compute_synthetic,
    embedding_dim,
    fit_encoders,
    label_and_clip,
    load_encoders,
    open_case_counts,
    save_encoders,
)

RULE = LabelRule({"APPROVE", "DECLINE"}, {"APPROVE"})


def acts(case):
    return case.activities("activity")


def test_clip_positive():
    out = label_and_clip(make_log({"c": [(0, "A"), (1, "B"), (2, "APPROVE"), (3, "C")]}), RULE)
    assert acts(out.cases[0]) == ["A", "B"]
    assert out.cases[0].target == 1


def test_clip_negative():
    out = label_and_clip(make_log({"c": [(0, "A"), (1, "DECLINE")], "d": [(0, "A"), (1, "APPROVE")]}), RULE)
    assert acts(out.cases[0]) == ["A"]
    assert out.cases[0].target == 0


def test_first_outcome_event_decides():
    out = label_and_clip(make_log({"c": [(0, "A"), (1, "DECLINE"), (2, "APPROVE")]}), RULE)
    assert out.cases[0].target == 0 and acts(out.cases[0]) == ["A"]


def test_unlabeled_policy():
    log = make_log({"c": [(0, "A"), (1, "B")], "d": [(0, "A"), (1, "APPROVE")]})
    assert label_and_clip(log, RULE).case_ids() == ["d"]
    with pytest.raises(NoOutcomeEvent) as exc:
        label_and_clip(log, LabelRule(RULE.outcome_activities, RULE.positive_activities, "error"))
    assert exc.value.case_id == "c"


def test_case_clipped_to_nothing_is_dropped():
    log = make_log({"c": [(0, "APPROVE")], "d": [(0, "A"), (1, "APPROVE")]})
    assert label_and_clip(log, RULE).case_ids() == ["d"]
    with pytest.raises(AllCasesDropped):
        label_and_clip(make_log({"c": [(0, "APPROVE")]}), RULE)
    with pytest.raises(UnknownOutcomeActivity):
        label_and_clip(make_log({"c": [(0, "A")]}), RULE)


def test_label_rule_invariants():
    with pytest.raises(ValueError):
        LabelRule({"A"}, {"B"})
    with pytest.raises(ValueError):
        LabelRule(set(), set())


def test_positive_rate_recovered_by_clipping():
    raw = generate_synthetic_log(SyntheticLogSpec(n_cases=1000, positive_rate=0.14, seed=3))
    out = label_and_clip(raw, synthetic_rule())
    rate = np.mean([c.target for c in out.cases])
    assert abs(rate - 0.14) <= 0.01
    outcomes = synthetic_rule().outcome_activities
    assert not any(e.values["activity"] in outcomes for e in out.events())


def test_synthetic_single_case():
    log = make_log({"c": [(0, "A"), (3600, "B")]})
    out = compute_synthetic(log, log)
    vals = [e.values for e in out.cases[0].events]
    assert [v["elapsed"] for v in vals] == [0, 3600]
    assert [v["evTime"] for v in vals] == [0, 3600]
    assert [v["evNr"] for v in vals] == [1, 2]


def test_nr_open_example():
    raw = make_log({"a": [(0, "A"), (10, "A")], "b": [(5, "A"), (20, "A")], "c": [(15, "A"), (30, "A")]})
    assert open_case_counts(raw, [7]).tolist() == [2]
    assert open_cases_brute(raw, 7) == 2
    # boundaries are inclusive
    assert open_case_counts(raw, [10, 15, 31]).tolist() == [2, 2, 0]


def test_calendar_fields():
    # 1970-01-02 01:30:00 UTC
    assert calendar_fields(86400 + 5400) == (5400, 1, 2, 1)


def test_nr_open_uses_raw_log():
    raw = make_log({"a": [(0, "A"), (5, "APPROVE"), (100, "Z")], "b": [(50, "A"), (60, "DECLINE")]})
    out = compute_synthetic(label_and_clip(raw, RULE), raw)
    b = next(c for c in out.cases if c.case_id == "b")
    assert b.events[0].values["nr_open"] == 2


@st.composite
def small_logs(draw):
    n = draw(st.integers(1, 8))
    spec = {}
    for i in range(n):
        ts = sorted(draw(st.lists(st.integers(0, 60), min_size=1, max_size=5)))
        spec[f"c{i}"] = [(t, "A") for t in ts]
    return make_log(spec)


@settings(max_examples=100, deadline=None)
@given(small_logs())
def test_synthetic_feature_invariants(log):
    out = compute_synthetic(log, log)
    for case in out.cases:
        v = [e.values for e in case.events]
        assert v[0]["evTime"] == 0
        assert [x["evNr"] for x in v] == list(range(1, len(v) + 1))
        el = [x["elapsed"] for x in v]
        assert el == sorted(el)
        for e in case.events:
            assert e.values["nr_open"] == open_cases_brute(log, e.timestamp)
            assert 0 <= e.values["sinceMidnight"] < 86400


def test_vocabulary_sizes():
    v = Vocabulary.fit("colour", ["red", "green", "blue", "red"])
    assert v.size == 5 and v.embedding_dim == 1
    months = Vocabulary.fit("month", [str(m) for m in range(1, 13)])
    assert months.size == 14 and months.embedding_dim == 3
    assert min(v.label_to_index.values()) == 2
    assert v.index("purple") == UNKNOWN_INDEX


@given(st.integers(1, 10_000))
def test_embedding_dim_rule(V):
    assert embedding_dim(V) == max(1, math.ceil(V / 5))
    assert embedding_dim(V + 1) >= embedding_dim(V)


def test_standardizer():
    s = Standardizer.fit("x", [1.0, 2.0, 3.0])
    assert s.mean == 2.0
    assert s.std == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    assert sum(s.transform([1.0, 2.0, 3.0])) == pytest.approx(0.0, abs=1e-12)
    assert s.transform([2.0])[0] == 0.0
    with pytest.warns(ConstantFeatureWarning):
        c = Standardizer.fit("y", [4.0, 4.0])
    assert c.std == 0 and list(c.transform([4.0, 9.0])) == [0.0, 0.0]


def _labelled_pool():
    raw = generate_synthetic_log(SyntheticLogSpec(n_cases=60, seed=5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantFeatureWarning)
        return compute_synthetic(label_and_clip(raw, synthetic_rule()), raw)


def test_encoders_standardize_training_events():
    pool = _labelled_pool()
    vocabs, stds = fit_encoders(pool)
    enc = apply_encoders(pool, vocabs, stds)
    M = np.concatenate([c.matrix for c in enc.cases])
    k = len(vocabs)
    assert np.all(M[:, :k] >= 2)
    for j in range(k, M.shape[1]):
        col = M[:, j]
        if stds[j - k].std > 0:
            assert abs(col.mean()) < 1e-9
            assert abs(col.std() - 1) < 1e-9
    assert enc.layout.n_categorical == k
    assert enc.layout.input_width == sum(v.embedding_dim for v in vocabs) + len(stds)


def test_unseen_label_maps_to_unknown():
    pool = _labelled_pool()
    vocabs, stds = fit_encoders(pool)
    case = pool.cases[0]
    ev = case.events[0]
    odd = type(ev)(ev.case_id, ev.timestamp, {**ev.values, "resource": "never-seen"}, ev.row)
    log = pool.with_cases([type(case)(case.case_id, (odd,), case.target)])
    enc = apply_encoders(log, vocabs, stds)
    j = [v.feature for v in vocabs].index("resource")
    assert enc.cases[0].matrix[0, j] == UNKNOWN_INDEX


def test_encoder_roundtrip(tmp_path):
    vocabs, stds = fit_encoders(_labelled_pool())
    save_encoders(tmp_path / "e.jsonl", vocabs, stds)
    v2, s2 = load_encoders(tmp_path / "e.jsonl")
    assert v2 == vocabs and s2 == stds
    save_encoders(tmp_path / "f.jsonl", v2, s2)
    assert (tmp_path / "e.jsonl").read_bytes() == (tmp_path / "f.jsonl").read_bytes()


def test_log_encoder_drop():
    pool = _labelled_pool()
    enc = LogEncoder(drop=TIME_FEATURES).fit(pool)
    out = enc.transform(pool)
    full = LogEncoder().fit(pool)
    assert full.layout_.n_categorical - out.layout.n_categorical == 3
    assert full.layout_.n_range - out.layout.n_range == 3
    assert not set(TIME_FEATURES) & set(out.layout.column_names)


def test_evnr_is_range():
    from procoutcome.features import SYNTHETIC_FEATURES

    assert Feature("evNr", RANGE, "synthetic") in SYNTHETIC_FEATURES
