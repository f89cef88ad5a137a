"""The three outcome classifiers: LSTM, LSTM with attention, and a 1D CNN."""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidGeometry, ShapeMismatch
from .features import ColumnLayout
from .nncore import (
    LSTM,
    AdditiveAttention,
    ColumnEmbedder,
    Conv1D,
    Dense,
    Flatten,
    LastStep,
    MaxPool1D,
    ReLU,
    Sigmoid,
)
from .nncore.layers import as_float

KINDS = ("lstm", "lstm_attention", "cnn")
BATCH_SIZES = (128, 256, 512, 1024)
SIZE_MULTIPLIERS = (1, 2, 4, 8, 16)
KERNEL_SIZES = (2, 3, 4, 8)

MODEL_MAGIC = b"PCNET\x00\x01\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    seq_len: int
    batch_size: int = 128
    size_multiplier: int = 1
    kernel_size: int | None = None
    seed: int = 0
    max_epochs: int = 100
    patience: int = 5
    base_width: int = 8
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if self.batch_size not in BATCH_SIZES:
            raise ValueError(f"batch_size must be one of {BATCH_SIZES}, got {self.batch_size}")
        if self.size_multiplier not in SIZE_MULTIPLIERS:
            raise ValueError(f"size_multiplier must be one of {SIZE_MULTIPLIERS}, got {self.size_multiplier}")
        if (self.kind == "cnn") != (self.kernel_size is not None):
            raise ValueError("kernel_size is required for cnn and not allowed for the LSTM kinds")
        if self.kernel_size is not None and self.kernel_size < 1:
            raise ValueError("kernel_size must be positive")
        if self.max_epochs < 1 or self.patience < 1 or self.base_width < 1:
            raise ValueError("max_epochs, patience and base_width must be positive")

    @property
    def width(self) -> int:
        return self.base_width * self.size_multiplier

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def cnn_stages(seq_len: int, kernel_size: int) -> list[tuple[int, bool]]:
    """Conv/pool stages that fit: list of (conv output length, pooled?) per stage."""
    if kernel_size > seq_len:
        raise InvalidGeometry(f"kernel_size {kernel_size} exceeds seq_len {seq_len}")
    stages = []
    L = seq_len - kernel_size + 1
    pooled = L >= 2
    stages.append((L, pooled))
    L1 = L // 2 if pooled else L
    if L1 >= kernel_size + 1:
        stages.append((L1 - kernel_size + 1, True))
    return stages


class Network:
    """Input embedding stage followed by a layer stack ending in one sigmoid unit."""

    def __init__(self, config: ModelConfig, layout: ColumnLayout, input_stage, layers):
        self.config = config
        self.layout = layout
        self.input_stage = input_stage
        self.layers = list(layers)

    def parameters(self):
        ps = list(self.input_stage.parameters())
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, X):
        X = as_float(X)
        if X.ndim != 3 or X.shape[1] != self.config.seq_len or X.shape[2] != self.layout.n_columns:
            raise ShapeMismatch(
                f"expected input (batch, {self.config.seq_len}, {self.layout.n_columns}), got {X.shape}"
            )
        h = self.input_stage.forward(X)
        for layer in self.layers:
            h = layer.forward(h)
        return h[:, 0]

    def backward(self, dp):
        g = np.asarray(dp, dtype=np.float64)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
        self.input_stage.backward(g)

    def state_dict(self) -> dict:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict) -> None:
        for p in self.parameters():
            v = state[p.name]
            if v.shape != p.shape:
                raise ShapeMismatch(f"{p.name}: stored shape {v.shape} != {p.shape}")
            p.value[...] = v

    def describe(self) -> list[dict]:
        return [self.input_stage.describe()] + [layer.describe() for layer in self.layers]

    # --- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        params = self.parameters()
        header = json.dumps(
            {
                "version": FORMAT_VERSION,
                "config": self.config.to_dict(),
                "config_hash": self.config.config_hash(),
                "layout": self.layout.to_dict(),
                "layers": self.describe(),
            },
            sort_keys=True,
        ).encode()
        buf = io.BytesIO()
        buf.write(MODEL_MAGIC)
        buf.write(struct.pack("<I", len(header)))
        buf.write(header)
        buf.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode()
            buf.write(struct.pack("<H", len(name)))
            buf.write(name)
            buf.write(struct.pack("<B", p.value.ndim))
            buf.write(struct.pack(f"<{p.value.ndim}I", *p.shape))
            buf.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Network":
        if blob[:8] != MODEL_MAGIC:
            raise ValueError("not a serialized network")
        (hlen,) = struct.unpack_from("<I", blob, 8)
        pos = 12
        header = json.loads(blob[pos : pos + hlen])
        pos += hlen
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {header['version']}")
        config = ModelConfig.from_dict(header["config"])
        if config.config_hash() != header["config_hash"]:
            raise ValueError("config hash mismatch; file is corrupted")
        net = build(config, ColumnLayout.from_dict(header["layout"]))
        (n_params,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        state = {}
        for _ in range(n_params):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            count = int(np.prod(shape))
            state[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
        net.load_state_dict(state)
        return net

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_bytes(Path(path).read_bytes())


def build(config: ModelConfig, layout: ColumnLayout) -> Network:
    """Instantiate the architecture named by ``config.kind`` for ``layout``.

    Each layer draws its initial weights from a generator derived from
    ``(config.seed, layer name)``, so layers shared across kinds start equal.
    """
    seed = config.seed
    w = config.width
    inp = ColumnEmbedder(layout.vocab_sizes, [c.embedding_dim for c in layout.categorical],
                         layout.n_range, seed=seed)
    D = inp.output_width
    if D == 0:
        raise InvalidGeometry("layout has no input columns")

    layers = []
    if config.kind == "lstm":
        layers += [LSTM(D, w, seed=seed, name="lstm"), LastStep()]
        n_flat = w
    elif config.kind == "lstm_attention":
        layers += [LSTM(D, w, seed=seed, name="lstm"), AdditiveAttention(w, w, seed=seed, name="attention")]
        n_flat = w
    else:
        k = config.kernel_size
        n_in = D
        filters = w
        L = config.seq_len
        for s, (L_out, pooled) in enumerate(cnn_stages(config.seq_len, k), start=1):
            layers += [Conv1D(n_in, filters, k, seed=seed, name=f"conv{s}"), ReLU()]
            L = L_out
            if pooled:
                layers.append(MaxPool1D(name=f"pool{s}"))
                L //= 2
            n_in = filters
            filters *= 2
        layers.append(Flatten())
        n_flat = L * n_in
    layers += [
        Dense(n_flat, w, seed=seed, name="dense_hidden"),
        ReLU(),
        Dense(w, 1, seed=seed, name="dense_out"),
        Sigmoid(),
    ]
    return Network(config, layout, inp, layers)


def predict(network: Network, X, batch_size: int = 4096) -> np.ndarray:
    """Outcome probabilities for a ``PrefixDataset`` or a ``(n, seq, cols)`` array."""
    X = getattr(X, "X", X)
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "rows"):
        X = np.stack([m.rows for m in X])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    out = [network.forward(X[i : i + batch_size]) for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def random_instance(kind: str, seed: int, bias_scale: float = 0.1):
    """A small random network/batch for gradient checking.

    Batch 2-4, seq_len 3-8, 1-2 categorical and 1-2 range columns, every layer
    width <= 8. Biases get a random offset so no ReLU sits exactly on its kink.
    """
    from .features import CategoricalColumn, embedding_dim

    rng = np.random.default_rng(seed)
    vocab = [int(v) for v in rng.integers(3, 8, size=int(rng.integers(1, 3)))]
    layout = ColumnLayout(
        tuple(CategoricalColumn(f"c{j}", v, embedding_dim(v)) for j, v in enumerate(vocab)),
        tuple(f"r{j}" for j in range(int(rng.integers(1, 3)))),
    )
    T = int(rng.integers(3, 9))
    kernel = int(rng.integers(2, min(4, T) + 1)) if kind == "cnn" else None
    config = ModelConfig(kind, seq_len=T, kernel_size=kernel, base_width=4, seed=seed)
    net = build(config, layout)
    for p in net.parameters():
        if p.value.ndim == 1:
            p.value += rng.normal(0.0, bias_scale, size=p.shape)
    B = int(rng.integers(2, 5))
    X = np.zeros((B, T, layout.n_columns))
    for j, v in enumerate(vocab):
        X[:, :, j] = rng.integers(0, v, size=(B, T))
    X[:, :, len(vocab):] = rng.normal(size=(B, T, layout.n_range))
    y = rng.integers(0, 2, size=B)
    return net, X, y
