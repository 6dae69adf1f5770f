"""Statistics-matching training loop.

Each column's posterior over the clean endpoint is an exponential family.
The per-sample loss ``A(eta) - tau(x1) . eta`` has gradient
``mu_theta - tau(x1)`` with respect to ``eta``, so training never needs
anything beyond the forward means and one backward pass through the net.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import net
from .expfam import Categorical
from .flowpath import interpolate
from .net import Head, ModelParams, NetOutput

log = logging.getLogger(__name__)

SMOOTH_WINDOW = 50


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    iterations: int = 8000
    batch_size: int = 4096
    lr: float = 1e-3
    seed: int = 0
    anneal_numerical: bool = True
    eval_every: int = 500
    t_epsilon: float = 0.0
    hidden: tuple[int, ...] = (256, 256)
    time_dim: int = 64

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not 0.0 <= self.t_epsilon < 1.0:
            raise ValueError("t_epsilon must be in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    params: ModelParams
    history: list[tuple[int, float, float, float]] = field(default_factory=list)
    best_iteration: int = -1
    best_loss: float = float("inf")

    @property
    def final_smoothed_loss(self) -> float:
        return self.history[-1][2] if self.history else float("nan")

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iteration", "raw_loss", "smoothed_loss", "w_num"])
            for it, raw, smooth, w_num in self.history:
                w.writerow([it, repr(raw), repr(smooth), repr(w_num)])


def weight_schedule(step: int, total: int, anneal: bool = True) -> tuple[float, float]:
    """(numerical weight, categorical weight). Categorical stays at 1;
    numerical decays linearly to 0 at ``step == total`` when annealing."""
    if not anneal:
        return 1.0, 1.0
    return max(0.0, 1.0 - step / total), 1.0


def column_weights(heads: list[Head], w_num: float, w_cat: float) -> np.ndarray:
    return np.array([w_cat if isinstance(h.family, Categorical) else w_num for h in heads])


def _stats(heads: list[Head], x1: np.ndarray) -> np.ndarray:
    """Sufficient statistics of encoded rows, in parameter layout."""
    x1 = np.asarray(x1, dtype=np.float64)
    cols = [x1[..., h.enc_offset:h.enc_offset + h.param_dim] for h in heads]
    return np.concatenate(cols, axis=-1) if cols else x1[..., :0]


def column_losses(heads: list[Head], eta, x1) -> np.ndarray:
    """Per-column ``A(eta_d) - tau_d(x1) . eta_d``, shape ``(..., n_columns)``."""
    eta = np.asarray(eta, dtype=np.float64)
    tau = _stats(heads, x1)
    out = []
    for h in heads:
        ps = slice(h.param_offset, h.param_offset + h.param_dim)
        out.append(h.family.log_partition(eta[..., ps]) - np.sum(tau[..., ps] * eta[..., ps], axis=-1))
    return np.stack(out, axis=-1)


def column_divergences(heads: list[Head], mu, x1) -> np.ndarray:
    """Per-column Bregman form of the loss, ``D(tau_d(x1), mu_d)``.

    Equal to the loss plus the theta-independent ``A*(tau_d(x1))``:
    half squared error for Gaussian columns, cross-entropy for categorical.
    """
    mu = np.asarray(mu, dtype=np.float64)
    tau = _stats(heads, x1)
    out = []
    for h in heads:
        ps = slice(h.param_offset, h.param_offset + h.param_dim)
        u, v = tau[..., ps], mu[..., ps]
        if isinstance(h.family, Categorical):
            # the interior requirement on v is met by construction; avoid its
            # check so saturated float32 outputs don't abort a training run
            full = np.clip(h.family.full_probs(v), 1e-300, None)
            uf = h.family.full_probs(u)
            out.append(-np.sum(uf * np.log(full), axis=-1))
        else:
            out.append(h.family.bregman(u, v))
    return np.stack(out, axis=-1)


def vfm_loss(output: NetOutput, x1, weights, heads: list[Head]) -> float:
    """Weighted mean over the batch of ``sum_d w_d [A(eta_d) - tau_d . eta_d]``."""
    per_col = column_losses(heads, output.eta, x1)
    return float(np.mean(per_col @ np.asarray(weights, dtype=np.float64)))


def loss_gradient(output: NetOutput, x1, weights, heads: list[Head]) -> np.ndarray:
    """Upstream gradient of :func:`vfm_loss` on ``eta``: ``w_d (mu_d - tau_d) / B``."""
    mu = np.asarray(output.mu, dtype=np.float64)
    tau = _stats(heads, x1)
    w = np.empty(mu.shape[-1])
    for h, wd in zip(heads, np.asarray(weights, dtype=np.float64)):
        w[h.param_offset:h.param_offset + h.param_dim] = wd
    batch = mu.shape[0] if mu.ndim == 2 else 1
    return (mu - tau) * w / batch


def train(data: np.ndarray, heads: list[Head] | None = None, config: TrainConfig | None = None,
          params: ModelParams | None = None, schema=None) -> TrainResult:
    """Fit the model on encoded rows.

    Returns the parameters at the iteration with the lowest smoothed
    (window 50) unweighted training divergence.
    """
    config = config or TrainConfig()
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D matrix")
    if params is None:
        if heads is None and schema is None:
            raise ValueError("need a schema, heads, or initial params")
        params = net.init_params(
            schema if schema is not None else heads, data.shape[1],
            hidden=config.hidden, time_dim=config.time_dim, seed=config.seed,
        )
    heads = params.heads
    dtype = params.dtype
    data = data.astype(dtype, copy=False)
    rng = np.random.default_rng(config.seed)
    n, dim = data.shape
    is_cat = np.array([isinstance(h.family, Categorical) for h in heads])

    result = TrainResult(params=params.copy())
    raw = np.empty(config.iterations)
    start_tracking = min(SMOOTH_WINDOW, config.iterations) - 1
    for it in range(config.iterations):
        idx = rng.integers(0, n, size=config.batch_size)
        x1 = data[idx]
        x0 = rng.standard_normal((config.batch_size, dim)).astype(dtype)
        t = rng.random(config.batch_size) * (1.0 - config.t_epsilon)
        xt = interpolate(x0, x1, t.astype(dtype))

        out = net.forward(params, xt, t)
        w_num, w_cat = weight_schedule(it, config.iterations, config.anneal_numerical)
        weights = column_weights(heads, w_num, w_cat)

        div = column_divergences(heads, out.mu, x1)
        if not np.all(np.isfinite(div)):
            bad_col = int(np.argmax(~np.isfinite(div).all(axis=0)))
            h = heads[bad_col]
            block = np.abs(out.eta[:, h.param_offset:h.param_offset + h.param_dim])
            eta_mag = float(block.max()) if np.isnan(block).all() else float(np.nanmax(block))
            raise TrainingError(
                f"non-finite loss at iteration {it}, column {h.name!r}, max |eta| = {eta_mag:.3g}"
            )
        raw[it] = float(div.sum(axis=1).mean())
        lo = max(0, it - SMOOTH_WINDOW + 1)
        smooth = float(raw[lo:it + 1].mean())
        result.history.append((it, raw[it], smooth, w_num))
        if it >= start_tracking and smooth < result.best_loss:
            result.best_loss = smooth
            result.best_iteration = it
            result.params = params.copy()

        grads = net.backward(params, out, loss_gradient(out, x1, weights, heads))
        net.adam_step(params, grads, lr=config.lr)
        if not all(np.all(np.isfinite(p)) for p in params.tensors()):
            raise TrainingError(f"non-finite parameters after update at iteration {it}")

        if config.eval_every and (it + 1) % config.eval_every == 0:
            cat_part = float(div[:, is_cat].sum(axis=1).mean()) if is_cat.any() else 0.0
            log.info(
                "iter %d  loss %.5f  smoothed %.5f  categorical %.5f  w_num %.3f",
                it + 1, raw[it], smooth, cat_part, w_num,
            )
    return result
