from __future__ import annotations

import numpy as np

EPS = 1e-12


def bce_loss(p, y, eps: float = EPS):
    """Mean binary cross-entropy and its gradient w.r.t. ``p``.

    ``p`` is clamped to ``[eps, 1 - eps]`` before taking logs.
    """
    p = np.asarray(p)
    p = np.clip(p if p.dtype.kind == "f" else p.astype(np.float64), eps, 1.0 - eps)
    y = np.asarray(y, dtype=p.dtype)
    n = p.size
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p)) / n
    return (float(loss) if loss.dtype == np.float64 else loss[()]), grad
