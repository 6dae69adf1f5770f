"""Pure numpy implementations of the compiled kernels."""

import numpy as np

_CHUNK_CELLS = 4_000_000


def ks_sorted(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    # integer ECDF gaps |i m - j n|, one division at the end
    i = np.searchsorted(a, pooled, side="right").astype(np.int64)
    j = np.searchsorted(b, pooled, side="right").astype(np.int64)
    return float(np.max(np.abs(i * m - j * n))) / (float(n) * m)


def w1_sorted(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.size, b.size
    if n == m:
        return float(np.sum(np.abs(a - b))) / n
    # merged quantile breakpoints in units of 1/(n m); both quantile
    # functions are constant on each cell (g_prev, g]
    grid = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m, np.arange(1, m + 1, dtype=np.int64) * n)
    widths = np.diff(np.concatenate([[0], grid]))
    qa = a[(grid + m - 1) // m - 1]
    qb = b[(grid + n - 1) // n - 1]
    return float(np.sum(widths * np.abs(qa - qb))) / (float(n) * m)


def nearest_mixed_distance(q_num, q_cat, r_num, r_cat):
    """For each query row, the min over reference rows of L1 numerical
    distance plus the count of mismatched categorical codes."""
    q_num = np.asarray(q_num, dtype=np.float64)
    r_num = np.asarray(r_num, dtype=np.float64)
    q_cat = np.asarray(q_cat, dtype=np.int64)
    r_cat = np.asarray(r_cat, dtype=np.int64)
    nq, nr = q_num.shape[0], r_num.shape[0]
    width = max(1, q_num.shape[1] + q_cat.shape[1])
    step = max(1, _CHUNK_CELLS // max(1, nr * width))
    out = np.empty(nq)
    for s in range(0, nq, step):
        e = min(nq, s + step)
        d = np.zeros((e - s, nr))
        for j in range(q_num.shape[1]):
            d += np.abs(q_num[s:e, j, None] - r_num[None, :, j])
        for j in range(q_cat.shape[1]):
            d += q_cat[s:e, j, None] != r_cat[None, :, j]
        out[s:e] = d.min(axis=1)
    return out
