"""Central finite-difference gradient checking.

The difference quotients are evaluated with the forward pass run in
``np.longdouble`` (x87 80-bit on x86-64), so roundoff in the loss stays far
below the size of the smallest gradient entries being checked. The analytic
side is the ordinary float64 backward pass.
"""

from __future__ import annotations

import numpy as np

from .loss import bce_loss

EXTENDED = np.longdouble


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6, skip_rows=()) -> np.ndarray:
    """d f() / d x by central differences, perturbing ``x`` in place.

    The divisor is the step actually representable in ``x``'s dtype. Rows of
    the leading axis listed in ``skip_rows`` are left at 0.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    if not np.shares_memory(flat, x):
        raise ValueError("x must be contiguous so it can be perturbed in place")
    gflat = grad.reshape(-1)
    row_size = x[0].size if x.ndim > 1 else 1
    skip = set(skip_rows)
    for i in range(flat.size):
        if skip and (i // row_size) in skip:
            continue
        old = flat[i]
        flat[i] = old + h
        up = flat[i]
        fp = f()
        flat[i] = old - h
        down = flat[i]
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (EXTENDED(up) - EXTENDED(down))
    return grad


def grad_check(network, X, y, h: float = 1e-6, loss=bce_loss, extended: bool = True) -> float:
    """Max relative error between backprop and finite-difference parameter gradients.

    ``network`` needs ``forward``, ``backward``, ``parameters`` and ``zero_grad``;
    ``loss(p, y)`` returns ``(value, dvalue/dp)``. The error per element is
    ``|a - n| / max(1e-8, |a| + |n|)``; frozen rows (embedding padding) are skipped.
    """
    network.zero_grad()
    p = network.forward(X)
    _, dp = loss(p, y)
    network.backward(dp)
    analytic = {id(q): q.grad.copy() for q in network.parameters()}

    Xn = np.asarray(X, dtype=EXTENDED if extended else np.float64)

    def f():
        return loss(network.forward(Xn), y)[0]

    worst = 0.0
    for q in network.parameters():
        num = numeric_gradient(f, q.value, h, skip_rows=q.frozen_rows)
        an = analytic[id(q)]
        if q.frozen_rows:
            keep = np.ones(q.shape[0], dtype=bool)
            keep[list(q.frozen_rows)] = False
            num, an = num[keep], an[keep]
        worst = max(worst, relative_error(an, num))
    return worst
