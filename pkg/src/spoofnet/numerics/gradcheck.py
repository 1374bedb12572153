from __future__ import annotations

import numpy as np


def numeric_gradient(fn, tensor, h=1e-5, indices=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensor.data``."""
    flat = tensor.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn().data)
        flat[i] = orig - h
        down = float(fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(fn, tensors, h=1e-5, max_entries=None, rng=None):
    """Compare tape gradients of scalar ``fn()`` with central differences.

    Returns the worst relative error over all checked entries. With
    ``max_entries`` only a random subset of each tensor is probed.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    loss.backward()
    worst = 0.0
    for t in tensors:
        size = t.data.size
        if max_entries is not None and size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = sorted(rng.choice(size, max_entries, replace=False))
        else:
            idx = range(size)
        numeric = numeric_gradient(fn, t, h=h, indices=idx)
        grad = np.zeros(size) if t.grad is None else t.grad.reshape(-1)
        worst = max(worst, max_relative_error([grad[i] for i in idx],
                                              [numeric[i] for i in idx]))
    return worst
