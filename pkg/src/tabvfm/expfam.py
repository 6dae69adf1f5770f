"""Minimal exponential families used as per-column variational posteriors.

Every family exposes the same vectorised surface: parameters are arrays
whose trailing axis has length ``param_dim`` and leading axes are batch
axes. Scalar families (Gaussian, Poisson) still carry a trailing axis of 1.

The categorical family is parameterised minimally with ``K - 1`` logits;
the last category is the reference with logit fixed at 0.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

__all__ = ["Family", "Gaussian", "Categorical", "Poisson", "family_from_dict"]

_LOG_2PI = math.log(2.0 * math.pi)


def _xlogx(x):
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


class Family:
    kind: str
    param_dim: int

    def sufficient_stat(self, x):
        raise NotImplementedError

    def log_partition(self, eta):
        raise NotImplementedError

    def mean_from_natural(self, eta):
        raise NotImplementedError

    def natural_from_mean(self, mu):
        raise NotImplementedError

    def conjugate_dual(self, mu):
        raise NotImplementedError

    def fisher_information(self, eta):
        raise NotImplementedError

    def log_base_measure(self, x):
        raise NotImplementedError

    def bregman(self, u, v):
        """Bregman divergence of the conjugate dual, ``D(u, v)``.

        ``u`` may sit on the boundary of the mean domain (e.g. a one-hot
        statistic); ``v`` must be interior.
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        grad = self.natural_from_mean(v)
        return self.conjugate_dual(u) - self.conjugate_dual(v) - np.sum((u - v) * grad, axis=-1)

    def log_likelihood(self, x, eta):
        """log q(x | eta) = log h(x) + tau(x) . eta - A(eta)."""
        tau = self.sufficient_stat(x)
        return self.log_base_measure(x) + np.sum(tau * eta, axis=-1) - self.log_partition(eta)

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.to_dict().items())))

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    """Unit-variance Gaussian with ``tau(x) = x``; only the mean is learned."""

    kind = "gaussian_unit_variance"
    param_dim = 1

    def sufficient_stat(self, x):
        return np.asarray(x, dtype=np.float64)[..., None]

    def log_partition(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        return 0.5 * eta[..., 0] ** 2

    def mean_from_natural(self, eta):
        return np.array(eta, dtype=np.float64)

    def natural_from_mean(self, mu):
        return np.array(mu, dtype=np.float64)

    def conjugate_dual(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        return 0.5 * mu[..., 0] ** 2

    def fisher_information(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        return np.ones(eta.shape[:-1] + (1, 1))

    def log_base_measure(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * x * x - 0.5 * _LOG_2PI


class Categorical(Family):
    kind = "categorical_minimal"

    def __init__(self, k: int):
        if k < 2:
            raise ValueError(f"categorical family needs at least 2 categories, got {k}")
        self.k = int(k)
        self.param_dim = self.k - 1

    def sufficient_stat(self, x):
        x = np.asarray(x)
        if np.any((x < 0) | (x >= self.k)):
            raise IndexError(f"category index out of range for K={self.k}")
        return np.eye(self.k, dtype=np.float64)[x.astype(np.int64)][..., :-1]

    def log_partition(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        m = np.maximum(eta.max(axis=-1), 0.0)
        return m + np.log(np.exp(-m) + np.exp(eta - m[..., None]).sum(axis=-1))

    def mean_from_natural(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        m = np.maximum(eta.max(axis=-1, keepdims=True), 0.0)
        e = np.exp(eta - m)
        return e / (np.exp(-m) + e.sum(axis=-1, keepdims=True))

    def full_probs(self, mu):
        """Append the reference-category probability to minimal means."""
        mu = np.asarray(mu, dtype=np.float64)
        return np.concatenate([mu, 1.0 - mu.sum(axis=-1, keepdims=True)], axis=-1)

    def _check_interior(self, mu):
        last = 1.0 - mu.sum(axis=-1)
        if np.any(mu <= 0.0) or np.any(last <= 0.0):
            raise ValueError("categorical mean parameters must lie in the open simplex")
        return last

    def natural_from_mean(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        last = self._check_interior(mu)
        return np.log(mu) - np.log(last)[..., None]

    def conjugate_dual(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        last = 1.0 - mu.sum(axis=-1)
        return _xlogx(mu).sum(axis=-1) + _xlogx(last)

    def fisher_information(self, eta):
        mu = self.mean_from_natural(eta)
        diag = mu[..., :, None] * np.eye(self.param_dim)
        return diag - mu[..., :, None] * mu[..., None, :]

    def log_base_measure(self, x):
        return np.zeros(np.shape(x))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k}

    def __repr__(self):
        return f"Categorical(k={self.k})"


class Poisson(Family):
    kind = "poisson"
    param_dim = 1

    def sufficient_stat(self, x):
        return np.asarray(x, dtype=np.float64)[..., None]

    def log_partition(self, eta):
        return np.exp(np.asarray(eta, dtype=np.float64)[..., 0])

    def mean_from_natural(self, eta):
        return np.exp(np.asarray(eta, dtype=np.float64))

    def natural_from_mean(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if np.any(mu <= 0.0):
            raise ValueError("poisson mean must be positive")
        return np.log(mu)

    def conjugate_dual(self, mu):
        mu = np.asarray(mu, dtype=np.float64)[..., 0]
        return _xlogx(mu) - mu

    def fisher_information(self, eta):
        return np.exp(np.asarray(eta, dtype=np.float64))[..., None]

    def log_base_measure(self, x):
        return -gammaln(np.asarray(x, dtype=np.float64) + 1.0)


def family_from_dict(d: dict) -> Family:
    kind = d["kind"]
    if kind == Gaussian.kind:
        return Gaussian()
    if kind == Categorical.kind:
        return Categorical(d["k"])
    if kind == Poisson.kind:
        return Poisson()
    raise ValueError(f"unknown family {kind!r}")
