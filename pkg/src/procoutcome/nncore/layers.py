"""Layers with explicit forward/backward passes over float64 numpy arrays.

Every layer caches what its backward pass needs during ``forward`` and adds
parameter gradients into ``Parameter.grad`` during ``backward``; the caller
zeroes gradients between batches.
"""

from __future__ import annotations

import numpy as np

from ..errors import IndexOutOfVocabulary, InputTooShort, KernelLargerThanInput, ShapeMismatch
from .params import Parameter, glorot_uniform, layer_rng


def sigmoid(x):
    # tanh form avoids overflow warnings for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(s, ds, axis=-1):
    """Gradient through ``s = softmax(x)`` given upstream ``ds``."""
    return s * (ds - (ds * s).sum(axis=axis, keepdims=True))


def as_float(x):
    """Float array view of ``x``; float64 unless already floating (the checker feeds longdouble)."""
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(np.float64)


class Layer:
    name = "layer"

    def parameters(self) -> list[Parameter]:
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def describe(self) -> dict:
        return {"type": type(self).__name__, "name": self.name}


class Embedding(Layer):
    """Lookup table whose row 0 is the padding vector: zero and never updated."""

    def __init__(self, vocab_size, dim, seed=0, name="embedding"):
        self.name = name
        rng = layer_rng(seed, name)
        table = rng.uniform(-0.05, 0.05, size=(vocab_size, dim))
        table[0] = 0.0
        self.table = Parameter(f"{name}.table", table, frozen_rows=(0,))
        self._idx = None

    def parameters(self):
        return [self.table]

    def forward(self, indices):
        idx = np.asarray(indices)
        if idx.dtype.kind == "f":
            if not np.all(idx == np.round(idx)):
                raise IndexOutOfVocabulary(f"{self.name}: non-integer index")
            idx = idx.astype(np.int64)
        V = self.table.shape[0]
        if idx.size and (idx.min() < 0 or idx.max() >= V):
            raise IndexOutOfVocabulary(f"{self.name}: index outside [0, {V})")
        self._idx = idx
        return self.table.value[idx]

    def backward(self, dy):
        np.add.at(self.table.grad, self._idx, dy)
        self.table.grad[0] = 0.0
        return None

    def describe(self):
        V, d = self.table.shape
        return {**super().describe(), "vocab_size": V, "dim": d}


class ColumnEmbedder(Layer):
    """Embed the leading categorical columns of each timestep and append the range columns.

    Input ``(batch, seq, n_cat + n_range)`` with categorical indices stored as
    floats; output ``(batch, seq, sum(embedding dims) + n_range)``.
    """

    def __init__(self, vocab_sizes, embedding_dims, n_range, seed=0, name="input"):
        self.name = name
        self.n_range = n_range
        self.embeddings = [
            Embedding(v, d, seed=seed, name=f"{name}.emb{j}")
            for j, (v, d) in enumerate(zip(vocab_sizes, embedding_dims))
        ]
        self.dims = list(embedding_dims)

    @property
    def n_categorical(self):
        return len(self.embeddings)

    @property
    def output_width(self):
        return sum(self.dims) + self.n_range

    def parameters(self):
        return [p for e in self.embeddings for p in e.parameters()]

    def forward(self, x):
        x = as_float(x)
        if x.ndim != 3 or x.shape[2] != self.n_categorical + self.n_range:
            raise ShapeMismatch(
                f"{self.name}: expected (batch, seq, {self.n_categorical + self.n_range}), got {x.shape}"
            )
        parts = [emb.forward(x[:, :, j]).astype(x.dtype, copy=False) for j, emb in enumerate(self.embeddings)]
        parts.append(x[:, :, self.n_categorical :])
        return np.concatenate(parts, axis=2)

    def backward(self, dy):
        off = 0
        for emb, d in zip(self.embeddings, self.dims):
            emb.backward(dy[:, :, off : off + d])
            off += d
        return None

    def describe(self):
        return {**super().describe(), "embeddings": [e.describe() for e in self.embeddings],
                "n_range": self.n_range}


class Dense(Layer):
    """Affine map over the last axis."""

    def __init__(self, n_in, n_out, seed=0, name="dense"):
        self.name = name
        rng = layer_rng(seed, name)
        self.W = Parameter(f"{name}.W", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        self.b = Parameter(f"{name}.b", np.zeros(n_out))
        self._x = None

    def parameters(self):
        return [self.W, self.b]

    def forward(self, x):
        if x.shape[-1] != self.W.shape[0]:
            raise ShapeMismatch(f"{self.name}: expected last dim {self.W.shape[0]}, got {x.shape}")
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self.W.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        return dy @ self.W.value.T

    def describe(self):
        return {**super().describe(), "n_in": self.W.shape[0], "n_out": self.W.shape[1]}


class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0.0)  # propagates NaN so bad inputs surface as a non-finite loss

    def backward(self, dy):
        return dy * self._mask


class Tanh(Layer):
    name = "tanh"

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y**2)


class Sigmoid(Layer):
    name = "sigmoid"

    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Softmax(Layer):
    name = "softmax"

    def forward(self, x):
        self._y = softmax(x, axis=-1)
        return self._y

    def backward(self, dy):
        return softmax_backward(self._y, dy, axis=-1)


class LSTM(Layer):
    """Single-layer LSTM over ``(batch, seq, in)``, zero initial state.

    Kernels are packed gate-wise as ``[input | forget | candidate | output]``:
    ``W`` is ``(in, 4h)``, ``U`` is ``(h, 4h)``, ``b`` is ``(4h,)`` with the
    forget slice initialised to 1. ``forward`` returns all hidden states
    ``(batch, seq, h)``; the final state is ``out[:, -1]``.
    """

    def __init__(self, n_in, n_hidden, seed=0, name="lstm"):
        self.name = name
        h = n_hidden
        self.n_hidden = h
        rng = layer_rng(seed, name)
        self.W = Parameter(f"{name}.W", glorot_uniform(rng, (n_in, 4 * h), n_in, 4 * h))
        self.U = Parameter(f"{name}.U", glorot_uniform(rng, (h, 4 * h), h, 4 * h))
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        self.b = Parameter(f"{name}.b", b)

    def parameters(self):
        return [self.W, self.U, self.b]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.W.shape[0]:
            raise ShapeMismatch(f"{self.name}: expected (batch, seq, {self.W.shape[0]}), got {x.shape}")
        B, T, _ = x.shape
        h = self.n_hidden
        W, U, b = self.W.value, self.U.value, self.b.value
        xw = x @ W + b  # input contributions for every step at once
        dt = xw.dtype
        Hs = np.zeros((B, T + 1, h), dtype=dt)  # Hs[:, t] is the state before step t
        Cs = np.zeros((B, T + 1, h), dtype=dt)
        gates = np.empty((B, T, 4 * h), dtype=dt)
        for t in range(T):
            z = xw[:, t] + Hs[:, t] @ U
            i = sigmoid(z[:, :h])
            f = sigmoid(z[:, h : 2 * h])
            g = np.tanh(z[:, 2 * h : 3 * h])
            o = sigmoid(z[:, 3 * h :])
            c = f * Cs[:, t] + i * g
            Cs[:, t + 1] = c
            Hs[:, t + 1] = o * np.tanh(c)
            gates[:, t, :h] = i
            gates[:, t, h : 2 * h] = f
            gates[:, t, 2 * h : 3 * h] = g
            gates[:, t, 3 * h :] = o
        self._cache = (x, Hs, Cs, gates)
        return Hs[:, 1:].copy()

    def backward(self, dH):
        x, Hs, Cs, gates = self._cache
        B, T, _ = x.shape
        h = self.n_hidden
        U = self.U.value
        dZ = np.empty((B, T, 4 * h))
        dh_next = np.zeros((B, h))
        dc_next = np.zeros((B, h))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :h]
            f = gates[:, t, h : 2 * h]
            g = gates[:, t, 2 * h : 3 * h]
            o = gates[:, t, 3 * h :]
            tc = np.tanh(Cs[:, t + 1])
            dh = dH[:, t] + dh_next
            dc = dh * o * (1.0 - tc**2) + dc_next
            dZ[:, t, :h] = dc * g * i * (1.0 - i)
            dZ[:, t, h : 2 * h] = dc * Cs[:, t] * f * (1.0 - f)
            dZ[:, t, 2 * h : 3 * h] = dc * i * (1.0 - g**2)
            dZ[:, t, 3 * h :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dZ[:, t] @ U.T
        dZ2 = dZ.reshape(B * T, 4 * h)
        self.W.grad += x.reshape(B * T, -1).T @ dZ2
        self.U.grad += Hs[:, :-1].reshape(B * T, h).T @ dZ2
        self.b.grad += dZ2.sum(axis=0)
        return dZ @ self.W.value.T

    def describe(self):
        return {**super().describe(), "n_in": self.W.shape[0], "n_hidden": self.n_hidden}


class LastStep(Layer):
    """``(batch, seq, h) -> (batch, h)``: keep the final timestep."""

    name = "last_step"

    def forward(self, x):
        self._shape = x.shape
        return x[:, -1]

    def backward(self, dy):
        dx = np.zeros(self._shape)
        dx[:, -1] = dy
        return dx


class AdditiveAttention(Layer):
    """Single-query additive attention pooling over timesteps.

    ``e_t = v . tanh(s_t W)``, ``alpha = softmax_t(e)``, output ``sum_t alpha_t s_t``.
    """

    def __init__(self, n_hidden, n_attention, seed=0, name="attention"):
        self.name = name
        rng = layer_rng(seed, name)
        self.W = Parameter(f"{name}.W", glorot_uniform(rng, (n_hidden, n_attention), n_hidden, n_attention))
        self.v = Parameter(f"{name}.v", glorot_uniform(rng, (n_attention,), n_attention, 1))

    def parameters(self):
        return [self.W, self.v]

    def forward(self, s):
        if s.ndim != 3 or s.shape[2] != self.W.shape[0]:
            raise ShapeMismatch(f"{self.name}: expected (batch, seq, {self.W.shape[0]}), got {s.shape}")
        u = np.tanh(s @ self.W.value)  # (B, T, a)
        e = u @ self.v.value  # (B, T)
        alpha = softmax(e, axis=1)
        self._cache = (s, u, alpha)
        self.weights = alpha
        return np.einsum("bt,bth->bh", alpha, s)

    def backward(self, dy):
        s, u, alpha = self._cache
        ds = alpha[:, :, None] * dy[:, None, :]
        dalpha = np.einsum("bth,bh->bt", s, dy)
        de = softmax_backward(alpha, dalpha, axis=1)
        self.v.grad += np.einsum("bt,bta->a", de, u)
        dpre = de[:, :, None] * self.v.value * (1.0 - u**2)  # (B, T, a)
        self.W.grad += np.einsum("bth,bta->ha", s, dpre)
        ds += dpre @ self.W.value.T
        return ds

    def describe(self):
        return {**super().describe(), "n_hidden": self.W.shape[0], "n_attention": self.W.shape[1]}


class Conv1D(Layer):
    """Valid, stride-1 convolution along the time axis over the full feature width.

    ``out[b, t, j] = bias[j] + sum_{tau < k, i} x[b, t + tau, i] * K[tau, i, j]``.
    """

    def __init__(self, n_in, n_filters, kernel_size, seed=0, name="conv"):
        self.name = name
        k = kernel_size
        rng = layer_rng(seed, name)
        self.K = Parameter(f"{name}.K", glorot_uniform(rng, (k, n_in, n_filters), k * n_in, k * n_filters))
        self.bias = Parameter(f"{name}.bias", np.zeros(n_filters))

    @property
    def kernel_size(self):
        return self.K.shape[0]

    def parameters(self):
        return [self.K, self.bias]

    def output_length(self, length):
        return length - self.kernel_size + 1

    def forward(self, x):
        k, n_in, _ = self.K.shape
        if x.ndim != 3 or x.shape[2] != n_in:
            raise ShapeMismatch(f"{self.name}: expected (batch, seq, {n_in}), got {x.shape}")
        T = x.shape[1]
        if k > T:
            raise KernelLargerThanInput(f"{self.name}: kernel {k} longer than input {T}")
        L = T - k + 1
        out = np.zeros((x.shape[0], L, self.bias.shape[0]), dtype=np.result_type(x, self.K.value))
        out += self.bias.value
        for tau in range(k):
            out += x[:, tau : tau + L] @ self.K.value[tau]
        self._x = x
        return out

    def backward(self, dy):
        x = self._x
        k = self.kernel_size
        L = dy.shape[1]
        dx = np.zeros_like(x)
        dy2 = dy.reshape(-1, dy.shape[2])
        for tau in range(k):
            xs = x[:, tau : tau + L]
            self.K.grad[tau] += xs.reshape(-1, x.shape[2]).T @ dy2
            dx[:, tau : tau + L] += dy @ self.K.value[tau].T
        self.bias.grad += dy2.sum(axis=0)
        return dx

    def describe(self):
        k, n_in, f = self.K.shape
        return {**super().describe(), "n_in": n_in, "n_filters": f, "kernel_size": k}


class MaxPool1D(Layer):
    """Non-overlapping max pooling of width 2 along time; a trailing odd step is dropped.

    Gradient goes to the first maximal element of each window.
    """

    window = 2

    def __init__(self, name="pool"):
        self.name = name

    def output_length(self, length):
        return length // self.window

    def forward(self, x):
        B, L, F = x.shape
        if L < self.window:
            raise InputTooShort(f"{self.name}: length {L} < pooling window {self.window}")
        L2 = L // self.window
        xr = x[:, : L2 * self.window].reshape(B, L2, self.window, F)
        arg = xr.argmax(axis=2)
        self._cache = (x.shape, arg)
        return np.take_along_axis(xr, arg[:, :, None, :], axis=2)[:, :, 0]

    def backward(self, dy):
        shape, arg = self._cache
        B, L, F = shape
        L2 = dy.shape[1]
        dxr = np.zeros((B, L2, self.window, F))
        np.put_along_axis(dxr, arg[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(shape)
        dx[:, : L2 * self.window] = dxr.reshape(B, L2 * self.window, F)
        return dx


class Flatten(Layer):
    name = "flatten"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)
