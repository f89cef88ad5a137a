"""End-to-end preprocessing: raw log to encoded training pool and test log."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

from .eventlog import EventLog, chronological_split
from .features import (
    ColumnLayout,
    LabelRule,
    Standardizer,
    Vocabulary,
    apply_encoders,
    compute_synthetic,
    drop_features,
    fit_encoders,
    layout_for,
    label_and_clip,
    shuffle_events,
)

STATS_COLUMNS = (
    "n_events", "n_cases", "min_events", "max_events", "mean_events", "median_events",
    "pos_events", "pos_cases", "n_categorical", "n_range",
)


@dataclass(frozen=True)
class LogStats:
    """Dataset summary in the shape of a data-overview table row."""

    n_events: int
    n_cases: int
    min_events: int
    max_events: int
    mean_events: float
    median_events: float
    pos_events: float
    pos_cases: float
    n_categorical: int
    n_range: int

    @classmethod
    def of(cls, log: EventLog) -> "LogStats":
        lengths = [len(c) for c in log.cases]
        pos_ev = sum(len(c) for c in log.cases if c.target == 1)
        pos_cases = sum(1 for c in log.cases if c.target == 1)
        return cls(
            n_events=sum(lengths),
            n_cases=len(lengths),
            min_events=min(lengths),
            max_events=max(lengths),
            mean_events=sum(lengths) / len(lengths),
            median_events=float(statistics.median(lengths)),
            pos_events=pos_ev / sum(lengths),
            pos_cases=pos_cases / len(lengths),
            n_categorical=len(log.schema.categorical()),
            n_range=len(log.schema.range()),
        )

    def row(self) -> list:
        return [getattr(self, c) for c in STATS_COLUMNS]


@dataclass(frozen=True)
class Prepared:
    pool: EventLog
    test: EventLog
    vocabularies: tuple[Vocabulary, ...]
    standardizers: tuple[Standardizer, ...]
    stats: LogStats

    @property
    def layout(self) -> ColumnLayout:
        return layout_for(self.vocabularies, self.standardizers)

    @property
    def median_case_length(self) -> float:
        return statistics.median(len(c) for c in self.pool.cases)


def featurize(raw_log: EventLog, rule: LabelRule, drop: Iterable[str] = (),
              shuffle_seed: int | None = None) -> EventLog:
    """Label and clip, optionally permute events, add synthetic features, drop features.

    Permutation happens before the synthetic features are computed, so
    order-derived features describe the permuted sequence.
    """
    log = label_and_clip(raw_log, rule)
    if shuffle_seed is not None:
        log = shuffle_events(log, shuffle_seed)
    log = compute_synthetic(log, raw_log)
    drop = tuple(drop)
    if drop:
        log = drop_features(log, drop)
    return log


def prepare(raw_log: EventLog, rule: LabelRule, test_fraction: float = 0.2,
            drop: Sequence[str] = (), shuffle_seed: int | None = None) -> Prepared:
    """Featurize, split chronologically, fit encoders on the pool and encode both sides."""
    log = featurize(raw_log, rule, drop, shuffle_seed)
    stats = LogStats.of(log)
    pool, test = chronological_split(log, test_fraction)
    vocabs, stds = fit_encoders(pool)
    return Prepared(apply_encoders(pool, vocabs, stds), apply_encoders(test, vocabs, stds),
                    tuple(vocabs), tuple(stds), stats)
