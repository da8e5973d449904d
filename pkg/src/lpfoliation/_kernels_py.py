"""Reference numpy implementation of the hot recursions.

Used when the compiled ``_kernels`` extension is unavailable, and as the
oracle the compiled version is tested against.
"""
import numpy as np


def exp_filter(decay, w_prev, w_next, h, y0=None, out=None):
    """Run ``y[j+1] = decay*y[j] + w_prev*h[j] + w_next*h[j+1]`` per column.

    ``h`` has shape (n_nodes, n_modes); the coefficient vectors have shape
    (n_modes,). ``y[0]`` is ``y0`` (zero by default).
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if out is None:
        out = np.empty_like(h)
    y = np.zeros(h.shape[1]) if y0 is None else np.array(y0, dtype=float)
    out[0] = y
    for j in range(n - 1):
        y = decay * y + w_prev * h[j] + w_next * h[j + 1]
        out[j + 1] = y
    return out
