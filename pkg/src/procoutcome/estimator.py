"""scikit-learn compatible wrapper around model building and the training protocol."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, column_or_1d

from .features import ColumnLayout
from .models import ModelConfig, predict
from .prefixes import PrefixDataset
from .training import shuffle_split, train


def check_prefix_array(X, layout: ColumnLayout | None = None, seq_len: int | None = None) -> np.ndarray:
    """Validate a ``(n, seq_len, n_columns)`` prefix array and return it as float64."""
    if isinstance(X, PrefixDataset):
        X = X.X
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
    if X.ndim != 3:
        raise ValueError(f"expected a 3-d array (n, seq_len, n_columns), got shape {X.shape}")
    if seq_len is not None and X.shape[1] != seq_len:
        raise ValueError(f"expected seq_len {seq_len}, got {X.shape[1]}")
    if layout is not None:
        if X.shape[2] != layout.n_columns:
            raise ValueError(f"expected {layout.n_columns} columns, got {X.shape[2]}")
        k = layout.n_categorical
        if k:
            idx = X[:, :, :k]
            if np.any(idx != np.floor(idx)) or np.any(idx < 0) or np.any(idx >= np.array(layout.vocab_sizes)):
                raise ValueError("categorical columns must hold integer indices below their vocabulary sizes")
    return X


def _range_layout(n_columns: int) -> ColumnLayout:
    return ColumnLayout((), tuple(f"x{j}" for j in range(n_columns)))


class OutcomeClassifier(ClassifierMixin, BaseEstimator):
    """Binary outcome classifier over windowed prefixes.

    ``fit`` accepts a :class:`PrefixDataset` (targets, case ids and layout
    are taken from it) or a 3-d array with ``y``. Without a ``layout`` every
    column of an array is treated as a range feature. Unless ``eval_set`` is
    given, a validation split is drawn at the level of ``groups`` (case ids;
    each row is its own group when omitted).
    """

    def __init__(self, kind="cnn", batch_size=128, size_multiplier=1, kernel_size=None, seed=0,
                 max_epochs=100, patience=5, base_width=8, learning_rate=1e-3,
                 validation_fraction=0.2, layout=None):
        self.kind = kind
        self.batch_size = batch_size
        self.size_multiplier = size_multiplier
        self.kernel_size = kernel_size
        self.seed = seed
        self.max_epochs = max_epochs
        self.patience = patience
        self.base_width = base_width
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.layout = layout

    def _as_dataset(self, X, y=None, groups=None, layout=None) -> PrefixDataset:
        if isinstance(X, PrefixDataset):
            return X
        X = check_prefix_array(X, layout)
        y = column_or_1d(y, warn=True).astype(np.int64)
        check_consistent_length(X, y)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("y must be binary 0/1")
        ids = [str(g) for g in groups] if groups is not None else [str(i) for i in range(len(y))]
        check_consistent_length(X, ids)
        return PrefixDataset(X, y, np.ones(len(y), dtype=np.int64), ids, layout or _range_layout(X.shape[2]))

    def fit(self, X, y=None, groups=None, eval_set=None):
        ds = self._as_dataset(X, y, groups, self.layout)
        config = ModelConfig(self.kind, seq_len=ds.seq_len, batch_size=self.batch_size,
                             size_multiplier=self.size_multiplier, kernel_size=self.kernel_size,
                             seed=self.seed, max_epochs=self.max_epochs, patience=self.patience,
                             base_width=self.base_width, learning_rate=self.learning_rate)
        if eval_set is not None:
            val = eval_set if isinstance(eval_set, PrefixDataset) else self._as_dataset(*eval_set, layout=ds.layout)
            tr = ds
        else:
            unique = sorted(set(ds.case_ids))
            tr_ids, va_ids = shuffle_split(unique, 1.0 - self.validation_fraction, seed=self.seed)
            va_ids = set(va_ids)
            mask = np.array([c in va_ids for c in ds.case_ids])
            tr, val = ds.take(np.flatnonzero(~mask)), ds.take(np.flatnonzero(mask))
        self.run_ = train(config, tr, val)
        self.network_ = self.run_.network
        self.layout_ = ds.layout
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = ds.layout.n_columns
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_prefix_array(X, self.layout_, self.network_.config.seq_len)
        p = predict(self.network_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
