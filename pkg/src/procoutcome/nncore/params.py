from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Parameter:
    """A trainable array with its gradient buffer.

    ``frozen_rows`` lists leading-axis rows that never receive gradient
    (the embedding padding row); optimizers and the gradient checker skip them.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    frozen_rows: tuple[int, ...] = ()

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def layer_rng(seed: int, name: str) -> np.random.Generator:
    """Generator derived from (seed, layer name), independent of build order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
