"""Analyses over trained models plus a seeded synthetic event-log generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidSpec, ProcOutcomeError
from .eventlog import CATEGORICAL, EPOCH_FORMAT, RANGE, Case, Event, EventLog, Feature, FeatureSchema
from .features import TIME_FEATURES, LabelRule
from .metrics import auc_roc, format_cell
from .models import KINDS, ModelConfig, predict
from .pipeline import prepare
from .prefixes import PrefixDataset, truncate_to_max_prefix, window_log
from .training import TrialRecord, evaluate_network, shuffle_split, train, trial_seed

# -- synthetic logs ---------------------------------------------------------

SIGNALS = ("activity", "bag", "hour")
POSITIVE_OUTCOME = "OUTCOME_POS"
NEGATIVE_OUTCOME = "OUTCOME_NEG"
TRAILING_ACTIVITY = "ARCHIVE"
START_EPOCH = 1577836800  # 2020-01-01T00:00:00Z


@dataclass(frozen=True)
class SyntheticLogSpec:
    """Parameters of a generated log.

    Signals:

    ``activity``
        Positive cases contain ``signal_activity`` at a uniformly drawn
        position among the first ``signal_depth`` events; negatives never do.
    ``bag``
        As ``activity`` but the position is uniform over the whole case, so
        the target depends on the multiset of activities only.
    ``hour``
        Activities are label-independent; positive cases start in the
        morning window and negatives in the afternoon window. Negatives
        copy the timing of a same-day positive, shifted by the offset
        between the two windows.

    Exactly ``round(positive_rate * n_cases)`` cases are positive.
    """

    n_cases: int = 1000
    min_length: int = 3
    max_length: int = 10
    alphabet: tuple[str, ...] = ("A", "B", "C", "D", "E", "F")
    signal: str = "activity"
    signal_activity: str = "X"
    signal_depth: int = 3
    positive_rate: float = 0.4
    mean_interarrival: float = 1800.0
    mean_gap: float = 300.0
    morning_hours: tuple[int, int] = (8, 11)
    afternoon_hours: tuple[int, int] = (14, 17)
    max_trailing: int = 2
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_cases < 1:
            problems.append("n_cases must be >= 1")
        if not 1 <= self.min_length <= self.max_length:
            problems.append("need 1 <= min_length <= max_length")
        if self.signal not in SIGNALS:
            problems.append(f"signal must be one of {SIGNALS}")
        if not self.alphabet:
            problems.append("alphabet must be non-empty")
        if self.signal_activity in self.alphabet:
            problems.append("signal_activity must not be in the background alphabet")
        reserved = {POSITIVE_OUTCOME, NEGATIVE_OUTCOME, TRAILING_ACTIVITY}
        if reserved & ({self.signal_activity} | set(self.alphabet)):
            problems.append(f"activities {sorted(reserved)} are reserved")
        if self.signal_depth < 1:
            problems.append("signal_depth must be >= 1")
        if not 0.0 <= self.positive_rate <= 1.0:
            problems.append("positive_rate must lie in [0, 1]")
        if self.mean_interarrival <= 0 or self.mean_gap <= 0:
            problems.append("mean_interarrival and mean_gap must be positive")
        for lo, hi in (self.morning_hours, self.afternoon_hours):
            if not 0 <= lo < hi <= 24:
                problems.append("hour windows must satisfy 0 <= start < end <= 24")
        if self.max_trailing < 0:
            problems.append("max_trailing must be >= 0")
        if problems:
            raise InvalidSpec("; ".join(problems))

    @property
    def n_positive(self) -> int:
        return round(self.positive_rate * self.n_cases)


def synthetic_schema() -> FeatureSchema:
    return FeatureSchema(
        (Feature("activity", CATEGORICAL), Feature("resource", CATEGORICAL), Feature("amount", RANGE)),
        case_id_column="case_id",
        timestamp_column="timestamp",
        activity_column="activity",
        timestamp_format=EPOCH_FORMAT,
    )


def synthetic_rule() -> LabelRule:
    return LabelRule(frozenset({POSITIVE_OUTCOME, NEGATIVE_OUTCOME}), frozenset({POSITIVE_OUTCOME}))


def generate_synthetic_log(spec: SyntheticLogSpec) -> EventLog:
    """Raw log with outcome events appended; each case's ``target`` holds the ground truth.

    Case starts follow a Poisson process (exponential inter-arrival times);
    events within a case are separated by exponential gaps. Every case ends
    with its outcome event followed by up to ``max_trailing`` bookkeeping
    events, so clipping at the first outcome event recovers the targets.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_cases
    positive = np.zeros(n, dtype=bool)
    positive[rng.permutation(n)[: spec.n_positive]] = True
    arrivals = START_EPOCH + np.cumsum(rng.exponential(spec.mean_interarrival, size=n))
    lengths = rng.integers(spec.min_length, spec.max_length + 1, size=n)
    trailing = rng.integers(0, spec.max_trailing + 1, size=n)
    starts = arrivals.astype(np.int64)
    gaps = [np.floor(rng.exponential(spec.mean_gap, size=int(lengths[i] + trailing[i]))).astype(np.int64)
            for i in range(n)]

    if spec.signal == "hour":
        # Each negative mirrors a positive of the same day shifted into the
        # afternoon window with identical gaps, so load and order features
        # have the same distribution in both classes.
        (lo, hi), (alo, _) = spec.morning_hours, spec.afternoon_hours
        shift = (alo - lo) * 3600
        days = (starts - START_EPOCH) // 86400
        for i in np.flatnonzero(positive):
            starts[i] = START_EPOCH + days[i] * 86400 + int(rng.integers(lo * 3600, hi * 3600))
        pos_idx, neg_idx = np.flatnonzero(positive), np.flatnonzero(~positive)
        for j, i in enumerate(neg_idx):
            if j < len(pos_idx):
                t = pos_idx[j]
                lengths[i], trailing[i], gaps[i] = lengths[t], trailing[t], gaps[t]
                starts[i] = starts[t] + shift
            else:
                starts[i] = START_EPOCH + days[i] * 86400 + shift + int(rng.integers(lo * 3600, hi * 3600))

    alphabet = np.array(spec.alphabet)
    resources = np.array(["R1", "R2", "R3", "R4"])
    width = len(str(n - 1))

    cases = []
    row = 0
    for i in range(n):
        length = int(lengths[i])
        acts = list(rng.choice(alphabet, size=length))
        if spec.signal in ("activity", "bag") and positive[i]:
            depth = min(spec.signal_depth, length) if spec.signal == "activity" else length
            acts[int(rng.integers(0, depth))] = spec.signal_activity
        acts.append(POSITIVE_OUTCOME if positive[i] else NEGATIVE_OUTCOME)
        acts.extend([TRAILING_ACTIVITY] * int(trailing[i]))

        times = starts[i] + np.concatenate([[0], np.cumsum(gaps[i][: len(acts) - 1])])
        res = rng.choice(resources, size=len(acts))
        amounts = np.round(rng.lognormal(5.0, 1.0, size=len(acts)), 2)
        cid = f"case{i:0{width}d}"
        events = []
        for a, t, r, x in zip(acts, times, res, amounts):
            events.append(Event(cid, int(t), {"activity": str(a), "resource": str(r), "amount": float(x)}, row))
            row += 1
        cases.append(Case(cid, events, int(positive[i])))
    return EventLog(synthetic_schema(), tuple(cases))


# -- earliness --------------------------------------------------------------


@dataclass(frozen=True)
class EarlinessCurve:
    prefix_lengths: tuple[int, ...]
    aucs: tuple[float | None, ...]
    counts: tuple[int, ...]
    aggregate_auc: float | None

    def auc_at(self, length: int) -> float | None:
        return self.aucs[self.prefix_lengths.index(length)]

    @property
    def max_auc(self) -> float | None:
        vals = [a for a in self.aucs if a is not None]
        return max(vals) if vals else None

    def rows(self) -> list[list]:
        return [[L, a, n] for L, a, n in zip(self.prefix_lengths, self.aucs, self.counts)]

    def write_csv(self, path) -> None:
        write_table(path, ("prefix_length", "auc_roc", "n"), self.rows())


def earliness_from_scores(scores, targets, prefix_lengths) -> EarlinessCurve:
    """Per-prefix-length AUC_ROC plus the AUC over all prefixes pooled.

    The pooled AUC compares prefixes across lengths as well, so it is in
    general not any average of the per-length values.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(targets)
    L = np.asarray(prefix_lengths)
    lengths, aucs, counts = [], [], []
    for k in np.unique(L):
        m = L == k
        lengths.append(int(k))
        aucs.append(auc_roc(s[m], y[m]))
        counts.append(int(m.sum()))
    return EarlinessCurve(tuple(lengths), tuple(aucs), tuple(counts), auc_roc(s, y) if len(s) else None)


def earliness(model, test_ds: PrefixDataset, max_prefix: int | None = None) -> EarlinessCurve:
    if max_prefix is not None:
        test_ds = truncate_to_max_prefix(test_ds, max_prefix)
    return earliness_from_scores(predict(model, test_ds.X), test_ds.targets, test_ds.prefix_lengths)


# -- ablation ---------------------------------------------------------------

VARIANTS = ("base", "no_time", "no_evnr", "shuffled")


@dataclass(frozen=True)
class AblationSpec:
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def dropped(self) -> tuple[str, ...]:
        if self.variant == "no_time":
            return TIME_FEATURES
        if self.variant == "no_evnr":
            return ("evNr",)
        return ()

    @property
    def shuffles(self) -> bool:
        return self.variant == "shuffled"


@dataclass
class AblationRow:
    variant: str
    aucs: list[float | None] = field(default_factory=list)
    failures: int = 0

    @property
    def ok(self) -> list[float]:
        return [a for a in self.aucs if a is not None]

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.ok)) if self.ok else None

    @property
    def std(self) -> float | None:
        # sample standard deviation over seeds
        return float(np.std(self.ok, ddof=1)) if len(self.ok) >= 2 else None

    def row(self) -> list:
        return [self.variant, self.mean, self.std, len(self.ok), self.failures]


ABLATION_COLUMNS = ("variant", "mean_auc_roc", "std_auc_roc", "n_seeds", "n_failed")


def ablation_run(config: ModelConfig, raw_log: EventLog, rule: LabelRule, variant: str, seed: int,
                 test_fraction: float = 0.2) -> float | None:
    """Preprocess for ``variant``, train one model and return its test AUC_ROC."""
    spec = AblationSpec(variant)
    prep = prepare(raw_log, rule, test_fraction, drop=spec.dropped,
                   shuffle_seed=seed if spec.shuffles else None)
    cfg = config.replace(seed=seed)
    tr, va = shuffle_split(prep.pool, 0.8, seed=seed)
    run = train(cfg, window_log(tr, cfg.seq_len), window_log(va, cfg.seq_len))
    return evaluate_network(run.network, window_log(prep.test, cfg.seq_len)).auc_roc


def ablate(best_config: ModelConfig, raw_log: EventLog, rule: LabelRule,
           variants: Sequence[str] = VARIANTS, n_seeds: int = 3, seed: int = 0,
           test_fraction: float = 0.2) -> list[AblationRow]:
    """Mean and spread of test AUC_ROC per variant over ``n_seeds`` retrainings.

    The seeds are shared across variants. Failed runs are counted, not raised.
    """
    if n_seeds < 3:
        raise ValueError("n_seeds must be >= 3")
    for v in variants:
        AblationSpec(v)
    seeds = [trial_seed(seed, s) for s in range(n_seeds)]
    rows = []
    for v in variants:
        row = AblationRow(v)
        for s in seeds:
            try:
                row.aucs.append(ablation_run(best_config, raw_log, rule, v, s, test_fraction))
            except ProcOutcomeError:
                row.failures += 1
        rows.append(row)
    return rows


# -- hyperparameter robustness ---------------------------------------------

SWEEPABLE = ("batch_size", "seq_len", "size_multiplier", "kernel_size")


def _trial_auc(t: TrialRecord) -> float | None:
    if t.status != "ok":
        return None
    return t.test.auc_roc if t.test is not None else None


def robustness_sweep(trials: Iterable[TrialRecord], hyperparameter: str) -> list[tuple]:
    """Mean test AUC_ROC over all trials sharing each value of ``hyperparameter``.

    Only successful trials with a defined test AUC enter the table.
    """
    if hyperparameter not in SWEEPABLE:
        raise ValueError(f"hyperparameter must be one of {SWEEPABLE}")
    groups: dict = {}
    for t in trials:
        auc = _trial_auc(t)
        if auc is None:
            continue
        groups.setdefault(getattr(t.config, hyperparameter), []).append(auc)
    return [(v, float(np.mean(a)), len(a)) for v, a in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0]))]


# -- best-trial report ------------------------------------------------------

REPORT_HEADER = ("model", "auc_roc", "f1", "accuracy", "auc_pr", "rel_time",
                 "batch_size", "seq_len", "kernel_size", "size_multiplier")


def relative_times(timings: dict) -> dict:
    """Run times as integer percentages of the fastest one.

    The single fastest entry (first in iteration order on exact ties) is
    100%; every other entry is ``round(own / fastest * 100)`` but at least
    101%, so the table always holds exactly one 100% entry.
    """
    if not timings:
        return {}
    fastest = min(timings, key=timings.get)
    base = timings[fastest]
    if base <= 0:
        raise ValueError("timings must be positive")
    return {k: 100 if k == fastest else max(101, round(t / base * 100)) for k, t in timings.items()}


def report_table(winners: dict, timing: dict) -> list[list]:
    """One row per model kind from its winning trial's test metrics and hyperparameters."""
    rel = relative_times(timing)
    rows = []
    for kind in sorted(winners, key=lambda k: KINDS.index(k) if k in KINDS else len(KINDS)):
        t = winners[kind]
        m = t.test
        c = t.config
        rows.append([kind, m and m.auc_roc, m and m.f1, m and m.accuracy, m and m.auc_pr,
                     f"{rel[kind]}%" if kind in rel else None,
                     c.batch_size, c.seq_len, c.kernel_size, c.size_multiplier])
    return rows


def epoch_seconds(config: ModelConfig, train_ds: PrefixDataset, val_ds: PrefixDataset, n_epochs: int = 3) -> float:
    """Mean wall-clock seconds of the mini-batch pass over ``n_epochs`` fixed epochs."""
    cfg = config.replace(max_epochs=n_epochs, patience=n_epochs)
    run = train(cfg, train_ds, val_ds, evaluate=lambda net, epoch: None)
    return run.seconds_per_epoch


# -- output -----------------------------------------------------------------


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_cell(v) for v in r])


def render_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Fixed-width plain-text rendering; floats shown with 4 decimals."""

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.4f}"
        return str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in body]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(line.rstrip() for line in lines)
