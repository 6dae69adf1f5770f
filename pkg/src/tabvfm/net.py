"""Time-conditioned MLP emitting per-column natural parameters.

The network maps ``(x_t, t)`` to the concatenated natural parameters of
every column's posterior. Gradients are written out by hand; the only
quantity ever back-propagated is an upstream gradient on ``eta``.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import TableSchema
from .expfam import Categorical, Family, Gaussian

# Relative error injected into the first-layer weight gradient. Only the
# self-test uses it, to prove the gradient check can fail.
GRADIENT_FAULT = float(os.environ.get("TABVFM_INJECT_FAULT", "0") or 0)


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class Head:
    """Where one column lives in the parameter and encoded layouts."""

    name: str
    family: Family
    param_offset: int
    enc_offset: int
    enc_width: int

    @property
    def param_dim(self) -> int:
        return self.family.param_dim


def heads_for_schema(schema: TableSchema) -> list[Head]:
    heads, p = [], 0
    for col, off in zip(schema.columns, schema.offsets):
        if col.encoded_width == 0:
            continue
        fam = Gaussian() if col.is_numerical else Categorical(len(col.categories))
        heads.append(Head(col.name, fam, p, off, col.encoded_width))
        p += fam.param_dim
    return heads


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    heads: list[Head]
    encoded_dim: int
    time_dim: int
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(a) for a in self.tensors()]
            self.v = [np.zeros_like(a) for a in self.tensors()]

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def param_dim(self) -> int:
        return sum(h.param_dim for h in self.heads)

    def tensors(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.heads, self.encoded_dim, self.time_dim,
            [a.astype(dtype) for a in self.m], [a.astype(dtype) for a in self.v], self.step,
        )

    def predict_mean(self, x, t):
        return forward(self, x, t).mean


def init_params(
    schema_or_heads: TableSchema | list[Head],
    encoded_dim: int | None = None,
    hidden: tuple[int, ...] = (256, 256),
    time_dim: int = 64,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Kaiming-uniform hidden layers, zero output layer."""
    if isinstance(schema_or_heads, TableSchema):
        heads = heads_for_schema(schema_or_heads)
        encoded_dim = schema_or_heads.encoded_dim
    else:
        heads = list(schema_or_heads)
        if encoded_dim is None:
            encoded_dim = max((h.enc_offset + h.enc_width for h in heads), default=0)
    if time_dim % 2:
        raise ValueError("time embedding dimension must be even")
    out_dim = sum(h.param_dim for h in heads)
    sizes = [encoded_dim + time_dim, *hidden, out_dim]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == len(sizes) - 2:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(w.astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return ModelParams(weights, biases, heads, encoded_dim, time_dim)


def time_embed(t, dim: int = 64) -> np.ndarray:
    """Sinusoidal features ``[sin(w_0 t), cos(w_0 t), sin(w_1 t), ...]``
    with ``w_k = 2 pi 10000^(-2k/dim)``."""
    if dim % 2:
        raise ValueError("time embedding dimension must be even")
    t = np.asarray(t, dtype=np.float64)
    freqs = 2.0 * np.pi * 10000.0 ** (-2.0 * np.arange(dim // 2) / dim)
    angles = t[..., None] * freqs
    out = np.empty(t.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


@dataclass
class NetOutput:
    eta: np.ndarray          # (B, param_dim) natural parameters
    mu: np.ndarray           # (B, param_dim) mean parameters
    mean: np.ndarray         # (B, encoded_dim) posterior mean in encoded space
    cache: list = field(repr=False, default_factory=list)
    owner: int = 0
    step: int = 0


def assemble_mean(heads: list[Head], eta: np.ndarray, encoded_dim: int, dtype=None):
    """Per-column mean parameters, and their embedding into the encoded space.

    Numerical slots take the Gaussian mean; categorical blocks take the full
    K-probability vector.
    """
    dtype = dtype or eta.dtype
    mu = np.empty(eta.shape, dtype=dtype)
    mean = np.zeros(eta.shape[:-1] + (encoded_dim,), dtype=dtype)
    for h in heads:
        ps = slice(h.param_offset, h.param_offset + h.param_dim)
        m = h.family.mean_from_natural(eta[..., ps])
        mu[..., ps] = m
        if isinstance(h.family, Categorical):
            mean[..., h.enc_offset:h.enc_offset + h.enc_width] = h.family.full_probs(m)
        else:
            mean[..., h.enc_offset] = m[..., 0]
    return mu, mean


def _silu(z):
    s = expit(z)
    return z * s, s


def forward(params: ModelParams, x, t) -> NetOutput:
    x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != params.encoded_dim:
        raise ValueError(f"input width {x.shape[-1]} != encoded dim {params.encoded_dim}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape[:1])
    h = np.concatenate([x, time_embed(t, params.time_dim).astype(params.dtype)], axis=1)
    cache = []
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i == n_layers - 1:
            cache.append((h, None))
            h = z
        else:
            a, s = _silu(z)
            cache.append((h, (z, s)))
            h = a
    eta = h
    mu, mean = assemble_mean(params.heads, eta, params.encoded_dim)
    if single:
        eta, mu, mean = eta[0], mu[0], mean[0]
    return NetOutput(eta, mu, mean, cache, id(params), params.step)


def backward(params: ModelParams, out: NetOutput, grad_eta) -> list[np.ndarray]:
    """Gradient of ``sum(eta * grad_eta)`` w.r.t. every tensor of ``params``.

    Returned in declaration order (W0, b0, W1, b1, ...).
    """
    if out.owner != id(params) or out.step != params.step or not out.cache:
        raise StaleCacheError("forward cache does not match the current parameters")
    g = np.asarray(grad_eta, dtype=params.dtype)
    if g.ndim == 1:
        g = g[None, :]
    grads: list[np.ndarray] = [None] * (2 * len(params.weights))
    for i in reversed(range(len(params.weights))):
        h_in, act = out.cache[i]
        if act is not None:
            z, s = act
            g = g * (s * (1.0 + z * (1.0 - s)))
        grads[2 * i] = h_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i:
            g = g @ params.weights[i].T
    if GRADIENT_FAULT:
        grads[0] = grads[0] * (1.0 + GRADIENT_FAULT)
    return grads


def adam_step(
    params: ModelParams,
    grads: list[np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ModelParams:
    """In-place Adam update with bias correction."""
    params.step += 1
    c1 = 1.0 - beta1 ** params.step
    c2 = 1.0 - beta2 ** params.step
    for p, g, m, v in zip(params.tensors(), grads, params.m, params.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params
