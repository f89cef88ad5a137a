"""Training protocol: case-level validation split, early stopping on validation AUC_ROC,
and random hyperparameter search with a resumable CSV ledger."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSplit, EmptyDataset, NonFiniteLoss, ProcOutcomeError, ShapeMismatch
from .eventlog import EventLog
from .metrics import MetricsReport, auc_roc, format_cell
from .models import (
    BATCH_SIZES,
    KERNEL_SIZES,
    SIZE_MULTIPLIERS,
    ModelConfig,
    Network,
    build,
    predict,
)
from .nncore import Adam, bce_loss
from .prefixes import PrefixDataset, window_log

log = logging.getLogger(__name__)

DEFAULT_SEQ_LENS = (5, 15, 25, 35, 45)


# -- splitting --------------------------------------------------------------


def shuffle_split(cases, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle of whole cases, then split into (train, validation).

    Accepts an :class:`EventLog` (returns two logs) or any sequence (returns two lists).
    """
    items = list(cases.cases) if isinstance(cases, EventLog) else list(cases)
    n = len(items)
    if n < 2:
        raise DegenerateSplit(f"need at least 2 cases to split, got {n}")
    n_train = math.floor(round(train_fraction * n, 9))
    if not 1 <= n_train <= n - 1:
        raise DegenerateSplit(f"train_fraction {train_fraction} on {n} cases leaves one side empty")
    order = np.random.default_rng(seed).permutation(n)
    train = [items[i] for i in order[:n_train]]
    val = [items[i] for i in order[n_train:]]
    if isinstance(cases, EventLog):
        return cases.with_cases(train), cases.with_cases(val)
    return train, val


# -- early stopping ---------------------------------------------------------


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strictly higher score.

    Epochs are 1-based. An absent score (``None``/NaN) never counts as an improvement.
    """

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, score) -> bool:
        """Record ``score`` for ``epoch``; return True if it is the new best."""
        if score is not None and not math.isnan(score) and score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


# -- training ---------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_auc_roc: float | None
    train_seconds: float
    wall_seconds: float


@dataclass
class TrainRun:
    config: ModelConfig
    seed: int
    history: list[EpochRecord]
    best_epoch: int
    best_val_auc: float | None
    network: Network = field(repr=False)
    wall_seconds: float = 0.0

    @property
    def n_epochs(self) -> int:
        return len(self.history)

    @property
    def model(self) -> bytes:
        return self.network.to_bytes()

    @property
    def seconds_per_epoch(self) -> float:
        return float(np.mean([h.train_seconds for h in self.history]))

    def history_rows(self) -> list[list[str]]:
        rows = [["epoch", "train_loss", "train_accuracy", "val_auc_roc", "train_seconds", "wall_seconds"]]
        for h in self.history:
            rows.append([str(h.epoch), repr(h.train_loss), repr(h.train_accuracy), format_cell(h.val_auc_roc),
                         repr(h.train_seconds), repr(h.wall_seconds)])
        return rows


def validation_auc(network: Network, val_ds: PrefixDataset):
    return auc_roc(predict(network, val_ds.X), val_ds.targets)


def _check_compatible(config: ModelConfig, *datasets: PrefixDataset):
    for ds in datasets:
        if len(ds) == 0:
            raise EmptyDataset("training and validation sets must be non-empty")
        if ds.seq_len != config.seq_len:
            raise ShapeMismatch(f"dataset seq_len {ds.seq_len} != config seq_len {config.seq_len}")
    if datasets[0].layout != datasets[-1].layout:
        raise ShapeMismatch("train and validation column layouts differ")


def train(
    config: ModelConfig,
    train_ds: PrefixDataset,
    val_ds: PrefixDataset,
    evaluate: Callable[[Network, int], float | None] | None = None,
    network: Network | None = None,
) -> TrainRun:
    """Mini-batch Adam on binary cross-entropy with early stopping on validation AUC_ROC.

    Training prefixes are reshuffled every epoch from a generator seeded by
    ``config.seed``; the last partial batch is kept. After each epoch
    ``evaluate(network, epoch)`` (validation AUC_ROC by default) feeds the
    stopping rule; the returned network holds the best epoch's parameters.
    """
    _check_compatible(config, train_ds, val_ds)
    net = network if network is not None else build(config, train_ds.layout)
    if evaluate is None:
        def evaluate(n, epoch):
            return validation_auc(n, val_ds)

    opt = Adam(net.parameters(), learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience)
    best_state = net.state_dict()
    history = []
    X, y = train_ds.X, train_ds.targets.astype(np.float64)
    n = len(train_ds)
    t_run = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            opt.zero_grad()
            p = net.forward(X[idx])
            loss, dp = bce_loss(p, y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, b)
            net.backward(dp)
            opt.step()
            total_loss += loss * len(idx)
            correct += int(((p >= 0.5) == (y[idx] == 1)).sum())
        t_train = time.perf_counter() - t0
        score = evaluate(net, epoch)
        if stopper.update(epoch, score):
            best_state = net.state_dict()
        history.append(EpochRecord(epoch, total_loss / n, correct / n, score,
                                   t_train, time.perf_counter() - t0))
        log.debug("epoch %d loss %.4f val_auc %s", epoch, total_loss / n, score)
        if stopper.should_stop:
            break

    net.load_state_dict(best_state)
    best = None if stopper.best_epoch == 0 else stopper.best
    return TrainRun(config, config.seed, history, stopper.best_epoch, best, net,
                    time.perf_counter() - t_run)


def evaluate_network(network: Network, ds: PrefixDataset, threshold: float = 0.5) -> MetricsReport:
    return MetricsReport.from_scores(predict(network, ds.X), ds.targets, threshold)


# -- random search ----------------------------------------------------------


def default_seq_lens(median_case_length: float | None = None) -> tuple[int, ...]:
    lens = set(DEFAULT_SEQ_LENS)
    if median_case_length:
        lens.add(math.ceil(1.5 * median_case_length))
    return tuple(sorted(lens))


@dataclass(frozen=True)
class SearchGrid:
    batch_sizes: tuple[int, ...] = BATCH_SIZES
    size_multipliers: tuple[int, ...] = SIZE_MULTIPLIERS
    seq_lens: tuple[int, ...] = DEFAULT_SEQ_LENS
    kernel_sizes: tuple[int, ...] = KERNEL_SIZES

    def combos(self, kind: str) -> list[dict]:
        """All admissible settings for ``kind``; CNN kernels longer than seq_len are left out."""
        out = []
        kernels = self.kernel_sizes if kind == "cnn" else (None,)
        for bs, m, sl, k in product(self.batch_sizes, self.size_multipliers, self.seq_lens, kernels):
            if k is not None and k > sl:
                continue
            out.append({"batch_size": bs, "size_multiplier": m, "seq_len": sl, "kernel_size": k})
        return out


def default_n_trials(kind: str) -> int:
    return 100 if kind == "cnn" else 50


def trial_seed(master_seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(trial_id)]).generate_state(1)[0])


def sample_configs(kind: str, grid: SearchGrid, n_trials: int, seed: int,
                   max_epochs: int = 100, base_width: int = 8, patience: int = 5) -> list[ModelConfig]:
    """Uniform draws from the grid, without replacement while the grid is large enough.

    The first ``len(grid)`` picks are a permutation and later picks are drawn
    uniformly, so raising ``n_trials`` extends an earlier search instead of
    reshuffling it.
    """
    combos = grid.combos(kind)
    if not combos:
        raise ValueError(f"search grid admits no {kind} configuration")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EA2C4]))
    picks = list(rng.permutation(len(combos))[:n_trials])
    if n_trials > len(combos):
        picks += list(rng.integers(0, len(combos), size=n_trials - len(combos)))
    return [
        ModelConfig(kind, seed=trial_seed(seed, t), max_epochs=max_epochs, base_width=base_width,
                    patience=patience, **combos[i])
        for t, i in enumerate(picks)
    ]


LEDGER_COLUMNS = (
    "trial_id", "kind", "batch_size", "seq_len", "size_multiplier", "kernel_size", "seed",
    "best_val_auc", "best_epoch", "n_epochs", "test_auc_roc", "test_f1", "test_accuracy",
    "test_auc_pr", "wall_seconds", "status",
)


@dataclass
class TrialRecord:
    trial_id: int
    config: ModelConfig
    best_val_auc: float | None = None
    best_epoch: int = 0
    n_epochs: int = 0
    test: MetricsReport | None = None
    wall_seconds: float = 0.0
    status: str = "ok"
    run: TrainRun | None = field(default=None, repr=False)

    def hyperparameters(self) -> dict:
        return _hyper(self.config)

    def ledger_row(self) -> list[str]:
        c = self.config
        t = self.test
        vals = [self.trial_id, c.kind, c.batch_size, c.seq_len, c.size_multiplier, c.kernel_size, c.seed,
                self.best_val_auc, self.best_epoch, self.n_epochs,
                t and t.auc_roc, t and t.f1, t and t.accuracy, t and t.auc_pr,
                self.wall_seconds, self.status]
        return [format_cell(v) for v in vals]

    @classmethod
    def from_ledger(cls, rec: dict, base: ModelConfig | None = None) -> "TrialRecord":
        def num(key, cast=float):
            v = rec.get(key, "")
            return None if v == "" else cast(v)

        extra = {}
        if base is not None:
            extra = {"max_epochs": base.max_epochs, "patience": base.patience, "base_width": base.base_width}
        config = ModelConfig(rec["kind"], seq_len=int(rec["seq_len"]), batch_size=int(rec["batch_size"]),
                             size_multiplier=int(rec["size_multiplier"]), kernel_size=num("kernel_size", int),
                             seed=int(rec["seed"]), **extra)
        test = None
        if rec.get("test_accuracy"):
            test = MetricsReport(num("test_auc_roc"), num("test_f1"), float(rec["test_accuracy"]),
                                 num("test_auc_pr"), 0, 0)
        return cls(int(rec["trial_id"]), config, num("best_val_auc"), int(rec["best_epoch"] or 0),
                   int(rec["n_epochs"] or 0), test, float(rec["wall_seconds"] or 0.0), rec["status"])


def read_ledger(path) -> dict[int, TrialRecord]:
    path = Path(path)
    if not path.exists():
        return {}
    with path.open(newline="", encoding="utf-8") as fh:
        return {int(r["trial_id"]): TrialRecord.from_ledger(r) for r in csv.DictReader(fh)}


class Ledger:
    """Append-only CSV of finished trials; existing rows mark trials to skip on resume."""

    def __init__(self, path):
        self.path = Path(path)
        self.done = read_ledger(self.path)
        if not self.path.exists():
            with self.path.open("w", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerow(LEDGER_COLUMNS)

    def append(self, record: TrialRecord) -> None:
        with self.path.open("a", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(record.ledger_row())
        self.done[record.trial_id] = record


def run_trial(trial_id: int, config: ModelConfig, pool: EventLog, test: EventLog | None = None,
              keep_run: bool = False) -> TrialRecord:
    """One search trial: fresh case-level split of the pool, windowing, training, optional test scoring."""
    t0 = time.perf_counter()
    rec = TrialRecord(trial_id, config)
    try:
        train_log, val_log = shuffle_split(pool, 0.8, seed=config.seed)
        run = train(config, window_log(train_log, config.seq_len), window_log(val_log, config.seq_len))
        rec.best_val_auc = run.best_val_auc
        rec.best_epoch = run.best_epoch
        rec.n_epochs = run.n_epochs
        if test is not None:
            rec.test = evaluate_network(run.network, window_log(test, config.seq_len))
        if keep_run:
            rec.run = run
    except (NonFiniteLoss, ProcOutcomeError, FloatingPointError) as exc:
        log.warning("trial %d failed: %s", trial_id, exc)
        rec.status = f"failed:{type(exc).__name__}"
    rec.wall_seconds = time.perf_counter() - t0
    return rec


def _hyper(c: ModelConfig) -> dict:
    return {"batch_size": c.batch_size, "seq_len": c.seq_len,
            "size_multiplier": c.size_multiplier, "kernel_size": c.kernel_size}


def _sort_key(rec: TrialRecord):
    ok = rec.status == "ok" and rec.best_val_auc is not None
    return (0 if ok else 1, -(rec.best_val_auc or 0.0), rec.trial_id)


def random_search(
    kind: str,
    pool: EventLog,
    grid: SearchGrid | None = None,
    n_trials: int | None = None,
    seed: int = 0,
    test: EventLog | None = None,
    ledger: str | Path | None = None,
    jobs: int = 1,
    max_epochs: int = 100,
    base_width: int = 8,
    patience: int = 5,
) -> list[TrialRecord]:
    """Random hyperparameter search over an encoded training pool.

    Trial ``t`` trains with seed ``trial_seed(seed, t)`` on its own case-level
    80/20 split. Finished trials are appended to ``ledger`` as they complete,
    and trial ids already in the ledger are not rerun. Failed trials count
    toward ``n_trials``. Records come back best validation AUC first.
    """
    if grid is None:
        med = float(np.median([len(c) for c in pool.cases]))
        grid = SearchGrid(seq_lens=default_seq_lens(med))
    n_trials = default_n_trials(kind) if n_trials is None else n_trials
    configs = sample_configs(kind, grid, n_trials, seed, max_epochs, base_width, patience)

    book = Ledger(ledger) if ledger is not None else None
    done = dict(book.done) if book else {}
    for t, rec in done.items():
        if t < n_trials and (rec.hyperparameters() != _hyper(configs[t]) or rec.config.seed != configs[t].seed):
            raise ValueError(f"ledger {ledger} row {t} was written by a different search (grid or seed changed)")
    todo = [(t, c) for t, c in enumerate(configs) if t not in done]
    records = [r for t, r in done.items() if t < n_trials]

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(run_trial, t, c, pool, test) for t, c in todo]
            for fut in futures:
                rec = fut.result()
                if book:
                    book.append(rec)
                records.append(rec)
    else:
        for t, c in todo:
            rec = run_trial(t, c, pool, test)
            if book:
                book.append(rec)
            records.append(rec)

    return sorted(records, key=_sort_key)


def best_trial(records: Sequence[TrialRecord]) -> TrialRecord:
    ok = [r for r in records if r.status == "ok" and r.best_val_auc is not None]
    if not ok:
        raise ValueError("no successful trial")
    return min(ok, key=_sort_key)
