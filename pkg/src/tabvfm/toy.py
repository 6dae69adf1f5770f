"""Bundled toy dataset: a bimodal numeric column and a noisy sign label."""

import numpy as np

from .data import CATEGORICAL, NUMERICAL, ColumnSpec, RawTable, TableSchema

TOY_SCHEMA = TableSchema((
    ColumnSpec("x", NUMERICAL),
    ColumnSpec("y", CATEGORICAL, ("neg", "pos", "rare")),
))


def make_toy(n_rows: int = 10_000, seed: int = 0, flip: float = 0.10, rare: float = 0.02) -> RawTable:
    """x ~ 0.5 N(-2, 1) + 0.5 N(2, 1); y = sign(x), flipped with prob. ``flip``,
    and replaced by the rare class with prob. ``rare``."""
    rng = np.random.default_rng(seed)
    centre = np.where(rng.random(n_rows) < 0.5, -2.0, 2.0)
    x = centre + rng.standard_normal(n_rows)
    y = (x > 0).astype(np.int64)
    flipped = rng.random(n_rows) < flip
    y = np.where(flipped, 1 - y, y)
    y = np.where(rng.random(n_rows) < rare, 2, y)
    labels = np.array(TOY_SCHEMA.column("y").categories, dtype=object)
    return RawTable(TOY_SCHEMA, {"x": x, "y": labels[y]})
