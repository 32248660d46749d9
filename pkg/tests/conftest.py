"""Shared helpers: central finite differences over named parameter blocks."""

import numpy as np


def central_diff_param_grads(loss_fn, params: dict, eps: float = 1e-5) -> dict:
    """Numeric gradient of ``loss_fn()`` w.r.t. every entry of every block.

    ``loss_fn`` must read the (mutated) ``params`` arrays on each call.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn()
            flat[j] = orig - eps
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def central_diff_input_grads(loss_fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Numeric gradient of ``loss_fn(x)`` w.r.t. a dense input array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        up = loss_fn(x)
        flat[j] = orig - eps
        down = loss_fn(x)
        flat[j] = orig
        gflat[j] = (up - down) / (2.0 * eps)
    return g


def max_rel_error(analytic: dict, numeric: dict) -> dict:
    """Relative error per block: worst deviation against the block's scale.

    Per-entry ratios are meaningless below the finite-difference noise floor,
    so each block is judged by ``max|a - n| / max(|a|, |n|)`` over the block.
    """
    out = {}
    for name in analytic:
        a = analytic[name].astype(np.float64)
        n = numeric[name]
        denom = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-8)
        out[name] = float(np.max(np.abs(a - n)) / denom)
    return out
