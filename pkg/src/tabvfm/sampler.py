"""Euler integration of the learned velocity field and decoding to raw rows."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import RawTable, TableSchema
from .quantile import QuantileMap

SAMPLE_BATCH = 10_000


class SamplingError(RuntimeError):
    pass


def worker_threads() -> int:
    try:
        return max(1, int(os.environ.get("TABBY_THREADS", "1")))
    except ValueError:
        return 1


def row_noise(seed: int, rows: range, dim: int) -> np.ndarray:
    """Source noise with one RNG stream per (seed, row index)."""
    out = np.empty((len(rows), dim))
    for j, i in enumerate(rows):
        out[j] = np.random.default_rng([seed, i]).standard_normal(dim)
    return out


def _integrate(model, x: np.ndarray, steps: int, start_row: int) -> np.ndarray:
    dt = 1.0 / steps
    for k in range(steps):
        t = k / steps
        mu = np.asarray(model.predict_mean(x, t))
        if k == steps - 1:
            # t + dt == 1: the Euler update x + dt (mu - x) / (1 - t) is exactly mu
            x = mu.copy()
        else:
            x = x + dt * (mu - x) / (1.0 - t)
        if not np.all(np.isfinite(x)):
            raise SamplingError(f"non-finite state at step {k} (rows from {start_row})")
    return x


def euler_sample(model, n_rows: int, steps: int = 25, seed: int = 0,
                 batch_size: int = SAMPLE_BATCH, threads: int | None = None) -> np.ndarray:
    """Integrate ``dx/dt = (E[x1 | x, t] - x) / (1 - t)`` from Gaussian noise.

    ``model`` needs ``encoded_dim`` and ``predict_mean(x, t)``; it is only read.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if n_rows < 0:
        raise ValueError("n_rows must be non-negative")
    dim = model.encoded_dim
    dtype = getattr(model, "dtype", np.float64)
    chunks = [range(s, min(s + batch_size, n_rows)) for s in range(0, n_rows, batch_size)]

    def run(rows: range) -> np.ndarray:
        x0 = row_noise(seed, rows, dim).astype(dtype)
        return _integrate(model, x0, steps, rows.start)

    threads = threads or worker_threads()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    if not parts:
        return np.zeros((0, dim), dtype=dtype)
    return np.concatenate(parts, axis=0)


def decode(generated: np.ndarray, schema: TableSchema, maps: dict[str, QuantileMap],
           mode: str = "argmax", seed: int = 0) -> RawTable:
    """Map encoded rows back to raw values.

    Categorical blocks decode by argmax, or in ``stochastic`` mode by sampling
    proportional to the clipped, renormalised block.
    """
    if mode not in ("argmax", "stochastic"):
        raise ValueError(f"unknown decode mode {mode!r}")
    generated = np.asarray(generated, dtype=np.float64)
    n = generated.shape[0]
    data = {}
    for col, off in zip(schema.columns, schema.offsets):
        if col.is_numerical:
            data[col.name] = maps[col.name].invert(generated[:, off])
            continue
        cats = np.array(col.categories, dtype=object)
        if col.encoded_width == 0:
            data[col.name] = np.full(n, cats[0], dtype=object)
            continue
        block = generated[:, off:off + col.encoded_width]
        if mode == "argmax":
            codes = np.argmax(block, axis=1)
        else:
            codes = _sample_blocks(block, seed, off)
        data[col.name] = cats[codes]
    return RawTable(schema, data)


def _sample_blocks(block: np.ndarray, seed: int, offset: int) -> np.ndarray:
    w = np.clip(block, 0.0, None)
    total = w.sum(axis=1, keepdims=True)
    uniform = np.full_like(w, 1.0 / w.shape[1])
    p = np.where(total > 0, w / np.where(total > 0, total, 1.0), uniform)
    cdf = np.cumsum(p, axis=1)
    # one uniform per (seed, block offset, row) so rows decode independently
    u = np.array([np.random.default_rng([seed, offset, i]).random() for i in range(len(p))])
    codes = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(codes, w.shape[1] - 1)
