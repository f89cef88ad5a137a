"""Outcome labeling, synthetic per-event features and categorical/range encoders."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import AllCasesDropped, NoOutcomeEvent, UnknownOutcomeActivity
from .eventlog import (
    CATEGORICAL,
    RANGE,
    SYNTHETIC,
    Case,
    Event,
    EventLog,
    Feature,
)

PAD_INDEX = 0
UNKNOWN_INDEX = 1
N_RESERVED = 2

SECONDS_PER_DAY = 86400

SYNTHETIC_FEATURES = (
    Feature("nr_open", RANGE, SYNTHETIC),
    Feature("elapsed", RANGE, SYNTHETIC),
    Feature("evTime", RANGE, SYNTHETIC),
    Feature("sinceMidnight", RANGE, SYNTHETIC),
    Feature("month", CATEGORICAL, SYNTHETIC),
    Feature("day", CATEGORICAL, SYNTHETIC),
    Feature("hour", CATEGORICAL, SYNTHETIC),
    Feature("evNr", RANGE, SYNTHETIC),
)
TIME_FEATURES = ("elapsed", "evTime", "sinceMidnight", "month", "day", "hour")


class ConstantFeatureWarning(UserWarning):
    """A range feature has zero variance on the fitting population."""


# -- labeling ---------------------------------------------------------------


@dataclass(frozen=True)
class LabelRule:
    outcome_activities: frozenset
    positive_activities: frozenset
    unlabeled_policy: str = "drop"

    def __post_init__(self):
        object.__setattr__(self, "outcome_activities", frozenset(self.outcome_activities))
        object.__setattr__(self, "positive_activities", frozenset(self.positive_activities))
        if not self.outcome_activities or not self.positive_activities:
            raise ValueError("outcome and positive activity sets must be non-empty")
        if not self.positive_activities <= self.outcome_activities:
            raise ValueError("positive activities must be a subset of the outcome activities")
        if self.unlabeled_policy not in ("drop", "error"):
            raise ValueError(f"unlabeled_policy must be 'drop' or 'error', got {self.unlabeled_policy!r}")


def label_and_clip(log: EventLog, rule: LabelRule) -> EventLog:
    """Label every case by its first outcome event and cut that event and everything after it.

    A case whose first outcome activity is positive gets target 1, otherwise 0.
    Cases without any outcome event are dropped or rejected per
    ``rule.unlabeled_policy``; cases left with no events are dropped.
    """
    act = log.schema.activity_column
    seen = {ev.values[act] for ev in log.events()}
    if not seen & rule.outcome_activities:
        raise UnknownOutcomeActivity(
            f"none of the outcome activities {sorted(rule.outcome_activities)} occur in the log"
        )

    kept = []
    for case in log.cases:
        cut = next(
            (i for i, ev in enumerate(case.events) if ev.values[act] in rule.outcome_activities),
            None,
        )
        if cut is None:
            if rule.unlabeled_policy == "error":
                raise NoOutcomeEvent(case.case_id)
            continue
        if cut == 0:
            continue
        target = int(case.events[cut].values[act] in rule.positive_activities)
        kept.append(Case(case.case_id, case.events[:cut], target))

    if not kept:
        raise AllCasesDropped("no case survived labeling and clipping")
    return log.with_cases(kept)


# -- synthetic features -----------------------------------------------------


def open_case_counts(raw_log: EventLog, timestamps) -> np.ndarray:
    """Number of raw cases with ``first <= t <= last`` for every ``t``.

    Sweep over sorted case boundaries: #starts at or before ``t`` minus
    #cases that already ended strictly before ``t``.
    """
    starts = np.sort(np.array([c.first_timestamp for c in raw_log.cases], dtype=np.int64))
    ends = np.sort(np.array([c.last_timestamp for c in raw_log.cases], dtype=np.int64))
    t = np.asarray(timestamps, dtype=np.int64)
    return np.searchsorted(starts, t, side="right") - np.searchsorted(ends, t, side="left")


def calendar_fields(ts: int) -> tuple[int, int, int, int]:
    """(seconds since UTC midnight, month, day, hour) of an epoch timestamp."""
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    return ts % SECONDS_PER_DAY, dt.month, dt.day, dt.hour


def compute_synthetic(log: EventLog, raw_log: EventLog) -> EventLog:
    """Append the eight synthetic features to every event.

    Features follow each case's event order as given, so a log whose events
    were permuted yields order features (``elapsed``, ``evTime``, ``evNr``)
    for that permuted order. ``nr_open`` is measured on ``raw_log``.
    """
    all_ts = [ev.timestamp for ev in log.events()]
    load = open_case_counts(raw_log, all_ts)

    pos = 0
    cases = []
    for case in log.cases:
        first = case.events[0].timestamp
        prev = first
        events = []
        for k, ev in enumerate(case.events):
            since_midnight, month, day, hour = calendar_fields(ev.timestamp)
            values = dict(ev.values)
            values.update(
                nr_open=float(load[pos]),
                elapsed=float(ev.timestamp - first),
                evTime=float(ev.timestamp - prev),
                sinceMidnight=float(since_midnight),
                month=str(month),
                day=str(day),
                hour=str(hour),
                evNr=float(k + 1),
            )
            events.append(replace(ev, values=values))
            prev = ev.timestamp
            pos += 1
        cases.append(Case(case.case_id, events, case.target))

    names = {f.name for f in SYNTHETIC_FEATURES}
    feats = [f for f in log.schema.features if f.name not in names] + list(SYNTHETIC_FEATURES)
    return EventLog(log.schema.with_features(feats), tuple(cases))


def shuffle_events(log: EventLog, seed: int) -> EventLog:
    """Permute the events of every case (seeded); events keep their own timestamps."""
    rng = np.random.default_rng(seed)
    cases = []
    for case in log.cases:
        order = rng.permutation(len(case))
        cases.append(Case(case.case_id, [case.events[i] for i in order], case.target))
    return log.with_cases(cases)


def drop_features(log: EventLog, names: Iterable[str]) -> EventLog:
    return EventLog(log.schema.without(names), log.cases, None)


# -- encoders ---------------------------------------------------------------


def embedding_dim(vocab_size: int) -> int:
    """One fifth of the vocabulary size, rounded up, at least 1."""
    return max(1, math.ceil(vocab_size / 5))


@dataclass(frozen=True)
class Vocabulary:
    feature: str
    label_to_index: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, feature: str, labels: Iterable) -> "Vocabulary":
        distinct = sorted({str(x) for x in labels})
        return cls(feature, {lab: i + N_RESERVED for i, lab in enumerate(distinct)})

    @property
    def size(self) -> int:
        return N_RESERVED + len(self.label_to_index)

    @property
    def embedding_dim(self) -> int:
        return embedding_dim(self.size)

    def index(self, label) -> int:
        return self.label_to_index.get(str(label), UNKNOWN_INDEX)

    def labels(self) -> list[str]:
        return sorted(self.label_to_index, key=self.label_to_index.__getitem__)


@dataclass(frozen=True)
class Standardizer:
    feature: str
    mean: float
    std: float

    @classmethod
    def fit(cls, feature: str, values: Sequence[float]) -> "Standardizer":
        x = np.asarray(values, dtype=np.float64)
        mean = float(x.mean())
        std = float(x.std())
        if std == 0.0:
            warnings.warn(f"range feature {feature!r} is constant on the training pool",
                          ConstantFeatureWarning, stacklevel=3)
        return cls(feature, mean, std)

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.std > 0:
            return (x - self.mean) / self.std
        return np.zeros_like(x)


@dataclass(frozen=True)
class CategoricalColumn:
    name: str
    vocab_size: int
    embedding_dim: int


@dataclass(frozen=True)
class ColumnLayout:
    """Column order of encoded event rows: categorical indices first, then range values."""

    categorical: tuple[CategoricalColumn, ...]
    range: tuple[str, ...]

    @property
    def n_categorical(self) -> int:
        return len(self.categorical)

    @property
    def n_range(self) -> int:
        return len(self.range)

    @property
    def n_columns(self) -> int:
        return self.n_categorical + self.n_range

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.categorical] + list(self.range)

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(c.vocab_size for c in self.categorical)

    @property
    def input_width(self) -> int:
        """Per-timestep width after embedding categorical columns."""
        return sum(c.embedding_dim for c in self.categorical) + self.n_range

    def to_dict(self) -> dict:
        return {
            "categorical": [[c.name, c.vocab_size, c.embedding_dim] for c in self.categorical],
            "range": list(self.range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnLayout":
        return cls(
            tuple(CategoricalColumn(n, int(v), int(e)) for n, v, e in d["categorical"]),
            tuple(d["range"]),
        )


def layout_for(vocabularies: Sequence[Vocabulary], standardizers: Sequence[Standardizer]) -> ColumnLayout:
    return ColumnLayout(
        tuple(CategoricalColumn(v.feature, v.size, v.embedding_dim) for v in vocabularies),
        tuple(s.feature for s in standardizers),
    )


def fit_encoders(train_pool: EventLog) -> tuple[list[Vocabulary], list[Standardizer]]:
    """Fit one vocabulary per categorical and one standardizer per range feature."""
    schema = train_pool.schema
    events = list(train_pool.events())
    vocabs = [Vocabulary.fit(f.name, (ev.values[f.name] for ev in events)) for f in schema.categorical()]
    stds = [Standardizer.fit(f.name, [ev.values[f.name] for ev in events]) for f in schema.range()]
    return vocabs, stds


def apply_encoders(log: EventLog, vocabularies: Sequence[Vocabulary],
                   standardizers: Sequence[Standardizer]) -> EventLog:
    """Replace categorical labels by indices (unseen -> 1) and standardize range values.

    Every returned case carries its encoded ``(n_events, n_columns)`` matrix
    and the log carries the resulting :class:`ColumnLayout`.
    """
    layout = layout_for(vocabularies, standardizers)
    cases = []
    for case in log.cases:
        mat = np.empty((len(case), layout.n_columns), dtype=np.float64)
        for j, voc in enumerate(vocabularies):
            mat[:, j] = [voc.index(ev.values[voc.feature]) for ev in case.events]
        off = len(vocabularies)
        for j, st in enumerate(standardizers):
            mat[:, off + j] = st.transform([ev.values[st.feature] for ev in case.events])
        events = []
        for i, ev in enumerate(case.events):
            values = {name: (int(mat[i, j]) if j < off else float(mat[i, j]))
                      for j, name in enumerate(layout.column_names)}
            events.append(replace(ev, values=values))
        mat.setflags(write=False)
        cases.append(Case(case.case_id, events, case.target, matrix=mat))
    return EventLog(log.schema, tuple(cases), layout)


def save_encoders(path, vocabularies, standardizers) -> None:
    """One JSON object per line, vocabularies first; byte-stable for equal encoders."""
    lines = []
    for v in vocabularies:
        lines.append(json.dumps({"feature": v.feature, "kind": CATEGORICAL, "labels": v.labels()},
                                ensure_ascii=False))
    for s in standardizers:
        lines.append(json.dumps({"feature": s.feature, "kind": RANGE, "mean": s.mean, "std": s.std}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_encoders(path) -> tuple[list[Vocabulary], list[Standardizer]]:
    vocabs, stds = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if d["kind"] == CATEGORICAL:
            vocabs.append(Vocabulary(d["feature"], {lab: i + N_RESERVED for i, lab in enumerate(d["labels"])}))
        else:
            stds.append(Standardizer(d["feature"], float(d["mean"]), float(d["std"])))
    return vocabs, stds


class LogEncoder(TransformerMixin, BaseEstimator):
    """Fit vocabularies/standardizers on a labeled log and encode logs with them.

    Parameters
    ----------
    drop : tuple of str
        Feature names excluded before fitting (used by the ablations).
    """

    def __init__(self, drop=()):
        self.drop = drop

    def fit(self, log: EventLog, y=None):
        if self.drop:
            log = drop_features(log, self.drop)
        self.vocabularies_, self.standardizers_ = fit_encoders(log)
        self.layout_ = layout_for(self.vocabularies_, self.standardizers_)
        return self

    def transform(self, log: EventLog) -> EventLog:
        check_is_fitted(self, "layout_")
        if self.drop:
            log = drop_features(log, self.drop)
        return apply_encoders(log, self.vocabularies_, self.standardizers_)
