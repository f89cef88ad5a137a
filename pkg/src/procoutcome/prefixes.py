"""Sliding-window prefix matrices built from encoded cases."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import EmptyLog
from .eventlog import Case, EventLog
from .features import ColumnLayout

MAGIC = b"PFXDS\x00\x01\x00"


@dataclass(frozen=True)
class PrefixMatrix:
    rows: np.ndarray  # (seq_len, n_columns), categorical indices first
    n_categorical: int
    prefix_length: int
    case_id: str
    target: int

    @property
    def seq_len(self) -> int:
        return self.rows.shape[0]

    @property
    def categorical(self) -> np.ndarray:
        return self.rows[:, : self.n_categorical].astype(np.int64)

    @property
    def range(self) -> np.ndarray:
        return self.rows[:, self.n_categorical :]

    @property
    def n_padding(self) -> int:
        return max(0, self.seq_len - self.prefix_length)


class PrefixDataset:
    """All prefix matrices of a log as one ``(n, seq_len, n_columns)`` array.

    ``targets``, ``prefix_lengths`` and ``case_ids`` run parallel to the first
    axis of ``X``.
    """

    def __init__(self, X, targets, prefix_lengths, case_ids, layout: ColumnLayout):
        self.X = np.asarray(X, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.prefix_lengths = np.asarray(prefix_lengths, dtype=np.int64)
        self.case_ids = np.asarray(case_ids, dtype=object)
        self.layout = layout
        n = self.X.shape[0]
        if self.X.ndim != 3 or self.X.shape[2] != layout.n_columns:
            raise ValueError(f"X shape {self.X.shape} does not match layout with {layout.n_columns} columns")
        if not (len(self.targets) == len(self.prefix_lengths) == len(self.case_ids) == n):
            raise ValueError("metadata arrays must match the number of matrices")

    @property
    def seq_len(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> PrefixMatrix:
        return PrefixMatrix(self.X[i], self.layout.n_categorical, int(self.prefix_lengths[i]),
                            str(self.case_ids[i]), int(self.targets[i]))

    def take(self, idx) -> "PrefixDataset":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.int64)
        return PrefixDataset(self.X[idx], self.targets[idx], self.prefix_lengths[idx],
                             self.case_ids[idx], self.layout)

    def matrices(self) -> list[PrefixMatrix]:
        return [self[i] for i in range(len(self))]

    # --- serialization -----------------------------------------------------

    def save(self, path) -> None:
        """Write the binary matrix file plus a ``.index.csv`` sidecar.

        Layout: 8-byte magic, uint32 header length, UTF-8 JSON header
        (seq_len, n_matrices, column layout), then little-endian float64
        matrices in row-major order.
        """
        path = Path(path)
        header = json.dumps(
            {"seq_len": self.seq_len, "n_matrices": len(self), "layout": self.layout.to_dict()},
            sort_keys=True, ensure_ascii=False,
        ).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
        with index_path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case_id", "prefix_length", "target"])
            for cid, pl, t in zip(self.case_ids, self.prefix_lengths, self.targets):
                w.writerow([cid, int(pl), int(t)])

    @classmethod
    def load(cls, path) -> "PrefixDataset":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:8] != MAGIC:
            raise ValueError(f"{path}: not a prefix dataset file")
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
        layout = ColumnLayout.from_dict(header["layout"])
        X = np.frombuffer(blob[12 + hlen :], dtype="<f8").astype(np.float64)
        X = X.reshape(header["n_matrices"], header["seq_len"], layout.n_columns)
        case_ids, lengths, targets = [], [], []
        with index_path(path).open(newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                case_ids.append(rec["case_id"])
                lengths.append(int(rec["prefix_length"]))
                targets.append(int(rec["target"]))
        return cls(X, targets, lengths, case_ids, layout)


def index_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".index.csv")


def _case_windows(matrix: np.ndarray, seq_len: int) -> np.ndarray:
    n, c = matrix.shape
    padded = np.vstack([np.zeros((seq_len - 1, c)), matrix])
    # window k ends at event k: rows k-seq_len+1 .. k, zero rows above the case start
    return sliding_window_view(padded, (seq_len, c))[:, 0]


def _matrix_of(case: Case) -> np.ndarray:
    if case.matrix is None:
        raise ValueError(f"case {case.case_id!r} is not encoded; run apply_encoders first")
    return np.asarray(case.matrix, dtype=np.float64)


def window_case(case: Case, seq_len: int, n_categorical: int = 0) -> list[PrefixMatrix]:
    """One bottom-aligned, zero-padded matrix per event of an encoded case."""
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    wins = _case_windows(_matrix_of(case), seq_len)
    return [PrefixMatrix(np.array(w), n_categorical, k + 1, case.case_id, int(case.target))
            for k, w in enumerate(wins)]


def window_log(log: EventLog, seq_len: int) -> PrefixDataset:
    """Window every case of an encoded log; one matrix per event."""
    if len(log) == 0:
        raise EmptyLog("cannot window an empty log")
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    if log.layout is None:
        raise ValueError("log is not encoded; run apply_encoders first")
    blocks, targets, lengths, ids = [], [], [], []
    for case in log.cases:
        wins = _case_windows(_matrix_of(case), seq_len)
        blocks.append(wins)
        n = len(case)
        targets.append(np.full(n, case.target, dtype=np.int64))
        lengths.append(np.arange(1, n + 1))
        ids.extend([case.case_id] * n)
    return PrefixDataset(np.concatenate(blocks), np.concatenate(targets),
                         np.concatenate(lengths), ids, log.layout)


def truncate_to_max_prefix(ds: PrefixDataset, max_prefix: int) -> PrefixDataset:
    if max_prefix < 1:
        raise ValueError("max_prefix must be >= 1")
    return ds.take(np.flatnonzero(ds.prefix_lengths <= max_prefix))


class PrefixWindower(TransformerMixin, BaseEstimator):
    """Stateless transformer: encoded :class:`EventLog` -> :class:`PrefixDataset`."""

    def __init__(self, seq_len=15, max_prefix=None):
        self.seq_len = seq_len
        self.max_prefix = max_prefix

    def fit(self, log=None, y=None):
        return self

    def __sklearn_is_fitted__(self):
        return True

    def transform(self, log: EventLog) -> PrefixDataset:
        ds = window_log(log, self.seq_len)
        if self.max_prefix is not None:
            ds = truncate_to_max_prefix(ds, self.max_prefix)
        return ds
