"""CSV event-log ingestion and chronological case splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateSplit,
    EmptyFile,
    MissingColumn,
    NonNumericRange,
    UnparsableTimestamp,
)

CATEGORICAL = "categorical"
RANGE = "range"
RAW = "raw"
SYNTHETIC = "synthetic"

MISSING_LABEL = "«missing»"
EPOCH_FORMAT = "epoch"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    source: str = RAW

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, RANGE):
            raise ValueError(f"feature {self.name!r}: kind must be categorical or range, got {self.kind!r}")
        if self.source not in (RAW, SYNTHETIC):
            raise ValueError(f"feature {self.name!r}: source must be raw or synthetic, got {self.source!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Column roles of an event log.

    ``features`` lists the model inputs in order; the case id and timestamp
    columns are bookkeeping and never model features. The activity column
    must be one of the categorical features.
    """

    features: tuple[Feature, ...]
    case_id_column: str
    timestamp_column: str
    activity_column: str
    timestamp_format: str = "%Y-%m-%d %H:%M:%S"
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in schema: {names}")
        if self.case_id_column == self.timestamp_column:
            raise ValueError("case id and timestamp columns must differ")
        for col in (self.case_id_column, self.timestamp_column):
            if col in names:
                raise ValueError(f"column {col!r} is a bookkeeping column and cannot be a feature")
        by_name = {f.name: f for f in self.features}
        act = by_name.get(self.activity_column)
        if act is None or act.kind != CATEGORICAL:
            raise ValueError(f"activity column {self.activity_column!r} must be declared categorical")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def categorical(self) -> list[Feature]:
        return [f for f in self.features if f.kind == CATEGORICAL]

    def range(self) -> list[Feature]:
        return [f for f in self.features if f.kind == RANGE]

    def raw_features(self) -> list[Feature]:
        return [f for f in self.features if f.source == RAW]

    def with_features(self, features: Iterable[Feature]) -> "FeatureSchema":
        return replace(self, features=tuple(features))

    def without(self, names: Iterable[str]) -> "FeatureSchema":
        drop = set(names)
        if self.activity_column in drop:
            raise ValueError("the activity feature cannot be dropped")
        return self.with_features(f for f in self.features if f.name not in drop)


@dataclass(frozen=True)
class Event:
    case_id: str
    timestamp: int
    values: Mapping[str, object]
    row: int = -1


@dataclass(frozen=True)
class Case:
    case_id: str
    events: tuple[Event, ...]
    target: int | None = None
    # encoded (n_events, n_columns) array, set by apply_encoders
    matrix: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise ValueError(f"case {self.case_id!r} has no events")

    def __len__(self):
        return len(self.events)

    # min/max rather than first/last so a shuffled case keeps its time span
    @property
    def first_timestamp(self) -> int:
        return min(e.timestamp for e in self.events)

    @property
    def last_timestamp(self) -> int:
        return max(e.timestamp for e in self.events)

    def activities(self, activity_column: str) -> list:
        return [e.values[activity_column] for e in self.events]


@dataclass(frozen=True)
class EventLog:
    schema: FeatureSchema
    cases: tuple[Case, ...] = field(default_factory=tuple)
    # ColumnLayout once the log has been encoded
    layout: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))

    def __len__(self):
        return len(self.cases)

    @property
    def n_events(self) -> int:
        return sum(len(c) for c in self.cases)

    def events(self) -> Iterable[Event]:
        for case in self.cases:
            yield from case.events

    def case_ids(self) -> list[str]:
        return [c.case_id for c in self.cases]

    def with_cases(self, cases: Iterable[Case]) -> "EventLog":
        return EventLog(self.schema, tuple(cases), self.layout)

    def subset(self, case_ids: Iterable[str]) -> "EventLog":
        keep = set(case_ids)
        return self.with_cases(c for c in self.cases if c.case_id in keep)


def parse_timestamp(value: str, fmt: str) -> int:
    """Parse to UTC epoch seconds; naive times are taken as UTC, sub-seconds truncated."""
    if fmt == EPOCH_FORMAT:
        return math.floor(float(value))
    dt = datetime.strptime(value, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int, fmt: str) -> str:
    if fmt == EPOCH_FORMAT:
        return str(int(ts))
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime(fmt)


def group_events(schema: FeatureSchema, events: Iterable[Event]) -> EventLog:
    """Group events into cases, sorting each case by timestamp (stable on input order)."""
    by_case: dict[str, list[Event]] = {}
    for ev in events:
        by_case.setdefault(ev.case_id, []).append(ev)
    cases = [
        Case(cid, tuple(sorted(evs, key=lambda e: e.timestamp)))
        for cid, evs in by_case.items()
    ]
    return EventLog(schema, tuple(cases))


def ingest_csv(path: str | Path, schema: FeatureSchema) -> EventLog:
    """Read a CSV event log into an :class:`EventLog`.

    Rows are grouped by the case id column and each case is sorted by
    timestamp, keeping file order for equal timestamps. An empty categorical
    cell becomes :data:`MISSING_LABEL`; an empty or non-numeric range cell
    is an error.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        header = reader.fieldnames
        if not header:
            raise EmptyFile(f"{path}: no header row")
        raw = schema.raw_features()
        required = [schema.case_id_column, schema.timestamp_column, *[f.name for f in raw]]
        for col in required:
            if col not in header:
                raise MissingColumn(col)

        events = []
        # row numbers count the header as row 1
        for i, rec in enumerate(reader, start=2):
            ts_text = rec[schema.timestamp_column]
            try:
                ts = parse_timestamp(ts_text, schema.timestamp_format)
            except (TypeError, ValueError):
                raise UnparsableTimestamp(i, ts_text) from None
            values = {}
            for feat in raw:
                cell = rec[feat.name]
                if feat.kind == CATEGORICAL:
                    values[feat.name] = cell if cell not in (None, "") else MISSING_LABEL
                else:
                    try:
                        x = float(cell)
                    except (TypeError, ValueError):
                        raise NonNumericRange(i, feat.name, cell) from None
                    if not math.isfinite(x):
                        raise NonNumericRange(i, feat.name, cell)
                    values[feat.name] = x
            events.append(Event(rec[schema.case_id_column], ts, values, row=i))

    if not events:
        raise EmptyFile(f"{path}: header present but no data rows")
    return group_events(schema, events)


def write_csv(log: EventLog, path: str | Path) -> None:
    """Write a raw log back to CSV, one row per event, in case order."""
    schema = log.schema
    cols = [schema.case_id_column, schema.timestamp_column, *[f.name for f in schema.raw_features()]]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        writer.writerow(cols)
        rows = sorted(
            (ev for ev in log.events()), key=lambda e: (e.timestamp, e.case_id, e.row)
        )
        for ev in rows:
            vals = []
            for f in schema.raw_features():
                v = ev.values[f.name]
                vals.append(repr(v) if isinstance(v, float) else v)
            writer.writerow([ev.case_id, format_timestamp(ev.timestamp, schema.timestamp_format), *vals])


def _n_test(n: int, fraction: float) -> int:
    # rounding guards against 0.1 * 30 == 3.0000000000000004
    return math.ceil(round(fraction * n, 9))


def chronological_split(log: EventLog, test_fraction: float = 0.2) -> tuple[EventLog, EventLog]:
    """Hold out the latest-starting cases.

    Cases are ordered by first-event timestamp (ties by case id) and the last
    ``ceil(test_fraction * N)`` of them form the test log.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplit(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(log)
    n_test = _n_test(n, test_fraction)
    if n == 0 or n_test < 1 or n_test >= n:
        raise DegenerateSplit(f"{n} cases with test_fraction {test_fraction} leave one side empty")
    ordered = sorted(log.cases, key=lambda c: (c.first_timestamp, c.case_id))
    return log.with_cases(ordered[: n - n_test]), log.with_cases(ordered[n - n_test :])


def case_lengths(cases: Sequence[Case]) -> list[int]:
    return [len(c) for c in cases]
