"""Independent oracles and small builders shared by the test modules.

Everything here is deliberately written without touching the implementations
under test: the conv oracle is a second, slice-based loop; the segmentation
oracles sweep query windows by brute force.
"""

import numpy as np


def slice_conv3d(volume, kernel):
    """Second independent valid-correlation implementation (slice sums)."""
    x = np.asarray(volume, dtype=np.float64)
    w = np.asarray(kernel, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., np.newaxis]
    if w.ndim == 3:
        w = w[..., np.newaxis]
    kh, kw, kt, _ = w.shape
    oh = x.shape[0] - kh + 1
    ow = x.shape[1] - kw + 1
    ot = x.shape[2] - kt + 1
    out = np.empty((oh, ow, ot))
    for i in range(oh):
        for j in range(ow):
            for t in range(ot):
                out[i, j, t] = float(
                    np.sum(w * x[i : i + kh, j : j + kw, t : t + kt, :])
                )
    return out


def uniform_plan_covers(t1, t2, t3, n):
    """True iff n evenly spaced t2-segments cover every t1 query window.

    Exact interval-union check: segment i covers query starts in
    [s_i, s_i + t2 - t1], so n even segments (the optimal uniform placement)
    cover [0, t3 - t1] iff consecutive cover-intervals leave no gap.
    """
    atol = 1e-9 * max(1.0, t3)
    if n == 1:
        return t2 >= t3 - atol
    spacing = (t3 - t2) / (n - 1)
    return spacing <= (t2 - t1) + atol


def minimal_uniform_count(t1, t2, t3, n_max=10_000):
    """Smallest segment count for which some uniform-length plan covers."""
    for n in range(1, n_max + 1):
        if uniform_plan_covers(t1, t2, t3, n):
            return n
    raise AssertionError("no covering uniform plan found")


def random_volume(rng, shape):
    return rng.random(shape)
