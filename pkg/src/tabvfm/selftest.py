"""Fast numerical self-checks of an installed build.

Each check returns a :class:`CheckResult`; :func:`run_all` runs them in
order. The suite covers the exponential-family duality identities, the
analytic loss gradient against finite differences, the likelihood /
divergence identity, the sampler's exact landing, and the metric oracles.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import metrics, net, sampler, trainer
from .data import CATEGORICAL, NUMERICAL, ColumnSpec, TableSchema
from .expfam import Categorical, Gaussian, Poisson
from .flowpath import interpolate
from .toy import make_toy


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


FAMILIES = (Gaussian(), Categorical(2), Categorical(4), Poisson())


def _random_eta(family, rng, n):
    if isinstance(family, Poisson):
        return rng.uniform(-3, 3, size=(n, 1))
    return rng.normal(scale=2.0, size=(n, family.param_dim))


def check_duality(n: int = 1000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = {"fenchel": 0.0, "grad": 0.0, "roundtrip": 0.0, "fisher": 0.0}
    for fam in FAMILIES:
        eta = _random_eta(fam, rng, n)
        mu = fam.mean_from_natural(eta)
        worst["fenchel"] = max(worst["fenchel"], float(np.max(np.abs(
            fam.log_partition(eta) + fam.conjugate_dual(mu) - np.sum(eta * mu, axis=-1)))))
        worst["roundtrip"] = max(worst["roundtrip"], float(np.max(np.abs(
            fam.mean_from_natural(fam.natural_from_mean(mu)) - mu))))
        h, h2 = 1e-5, 1e-4
        fisher = fam.fisher_information(eta)
        for j in range(fam.param_dim):
            e = np.zeros(fam.param_dim)
            e[j] = h
            fd = (fam.log_partition(eta + e) - fam.log_partition(eta - e)) / (2 * h)
            worst["grad"] = max(worst["grad"], float(np.max(np.abs(fd - mu[:, j]))))
            e[j] = h2
            col = (fam.mean_from_natural(eta + e) - fam.mean_from_natural(eta - e)) / (2 * h2)
            worst["fisher"] = max(worst["fisher"], float(np.max(np.abs(col - fisher[:, :, j]))))
    ok = (worst["fenchel"] < 1e-10 and worst["grad"] < 1e-6
          and worst["roundtrip"] < 1e-10 and worst["fisher"] < 1e-5)
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def check_gradient(seed: int = 0) -> tuple[bool, str]:
    schema = TableSchema((
        ColumnSpec("a", NUMERICAL),
        ColumnSpec("c", CATEGORICAL, ("x", "y", "z")),
        ColumnSpec("b", NUMERICAL),
    ))
    p = net.init_params(schema, hidden=(8, 8), time_dim=4, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    p.weights[-1][...] = rng.normal(scale=0.5, size=p.weights[-1].shape)
    p.biases[-1][...] = rng.normal(scale=0.5, size=p.biases[-1].shape)
    n = 4
    x1 = np.zeros((n, schema.encoded_dim))
    x1[:, 0] = rng.normal(size=n)
    x1[np.arange(n), 1 + rng.integers(0, 3, n)] = 1.0
    x1[:, 4] = rng.normal(size=n)
    t = rng.random(n)
    xt = interpolate(rng.normal(size=x1.shape), x1, t)
    weights = np.array([0.4, 1.0, 0.4])
    out = net.forward(p, xt, t)
    analytic = net.backward(p, out, trainer.loss_gradient(out, x1, weights, p.heads))

    def loss():
        return trainer.vfm_loss(net.forward(p, xt, t), x1, weights, p.heads)

    h, worst = 1e-6, 0.0
    for a, tensor in zip(analytic, p.tensors()):
        flat, aflat = tensor.reshape(-1), a.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up = loss()
            flat[j] = old - h
            down = loss()
            flat[j] = old
            fd = (up - down) / (2 * h)
            if abs(aflat[j] - fd) > 1e-10:
                worst = max(worst, abs(aflat[j] - fd) / (abs(aflat[j]) + 1e-8))
    return worst < 1e-4, f"max relative error {worst:.1e}"


def check_nll_identity(n: int = 10_000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst, worst_cat = 0.0, 0.0
    for fam in FAMILIES:
        m = n // len(FAMILIES)
        eta = _random_eta(fam, rng, m)
        if isinstance(fam, Gaussian):
            x = rng.normal(scale=3, size=m)
        elif isinstance(fam, Poisson):
            x = rng.integers(0, 30, size=m)
        else:
            x = rng.integers(0, fam.k, size=m)
        tau = fam.sufficient_stat(x)
        mu = fam.mean_from_natural(eta)
        nll = -fam.log_likelihood(x, eta)
        div = fam.bregman(tau, mu)
        rhs = div - fam.conjugate_dual(tau) - fam.log_base_measure(x)
        worst = max(worst, float(np.max(np.abs(nll - rhs))))
        if isinstance(fam, Categorical):
            worst_cat = max(worst_cat, float(np.max(np.abs(nll - div))))
    return worst < 1e-8 and worst_cat < 1e-8, f"identity {worst:.1e}, categorical NLL vs divergence {worst_cat:.1e}"


def _random_mean(fam, rng):
    if isinstance(fam, Gaussian):
        return rng.normal(scale=2, size=1)
    if isinstance(fam, Poisson):
        return rng.uniform(0.2, 5, size=1)
    return rng.dirichlet(np.ones(fam.k))[:-1]


def check_affine_gradient(n: int = 500, seed: int = 0) -> tuple[bool, str]:
    """grad_v D(sum a_i x_i, v) == sum a_i grad_v D(x_i, v) for weights summing to 1."""
    rng = np.random.default_rng(seed)
    h, worst = 1e-6, 0.0
    for i in range(n):
        fam = FAMILIES[i % len(FAMILIES)]
        k = int(rng.integers(2, 5))
        xs = np.array([_random_mean(fam, rng) for _ in range(k)])
        if isinstance(fam, Gaussian):
            alpha = rng.normal(size=k)
            alpha += (1.0 - alpha.sum()) / k
        else:
            alpha = rng.dirichlet(np.ones(k))
        u = alpha @ xs
        v = _random_mean(fam, rng)

        def grad(point):
            g = np.empty(fam.param_dim)
            for j in range(fam.param_dim):
                e = np.zeros(fam.param_dim)
                e[j] = h
                g[j] = (fam.bregman(point, v + e) - fam.bregman(point, v - e)) / (2 * h)
            return g

        lhs = grad(u)
        rhs = sum(a * grad(x) for a, x in zip(alpha, xs))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst < 1e-5, f"max abs difference {worst:.1e}"


class _ConstantField:
    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)
        self.encoded_dim = self.c.size
        self.times: list[float] = []

    def predict_mean(self, x, t):
        self.times.append(t)
        return np.broadcast_to(self.c, x.shape).copy()


def check_exact_landing() -> tuple[bool, str]:
    c = np.array([0.3141592653589793, -2.5, 1e-12])
    for steps in (1, 5, 25):
        stub = _ConstantField(c)
        out = sampler.euler_sample(stub, 16, steps=steps, seed=steps)
        if not np.array_equal(out, np.broadcast_to(c, out.shape)):
            return False, f"T={steps}: output differs from the constant mean"
        if any(t >= 1.0 for t in stub.times):
            return False, f"T={steps}: field evaluated at t=1"
    return True, "bit-exact for T in {1, 5, 25}; no evaluation at t=1"


def check_metric_oracles() -> tuple[bool, str]:
    values = (0, 1, 2)
    sets = [s for n in range(1, 7) for s in itertools.combinations_with_replacement(values, n)]

    def cdf(s, x):
        return Fraction(sum(v <= x for v in s), len(s))

    bad = 0
    for a in sets:
        for b in sets:
            ks = max(abs(cdf(a, x) - cdf(b, x)) for x in values)
            w1 = sum(abs(cdf(a, x) - cdf(b, x)) for x in values[:-1])
            tv = sum(abs(Fraction(a.count(v), len(a)) - Fraction(b.count(v), len(b))) for v in values) / 2
            bad += metrics.ks_statistic(a, b) != float(ks)
            bad += metrics.wasserstein1(a, b) != float(w1)
            bad += metrics.tvd_values(a, b) != float(tv)
    table = make_toy(200, seed=1)
    dcr = metrics.dcr_score(make_toy(100, seed=2), table, table)
    ok = bad == 0 and dcr == 50.0
    return ok, f"{bad} mismatches over {len(sets) ** 2} multiset pairs; dcr(syn, A, A) = {dcr}"


CHECKS = (
    ("duality identities", check_duality),
    ("loss gradient vs finite differences", check_gradient),
    ("likelihood / divergence identity", check_nll_identity),
    ("affine-combination gradient", check_affine_gradient),
    ("sampler exact landing", check_exact_landing),
    ("metric oracles", check_metric_oracles),
)


def run_all() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not an aborted run
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - start))
    return results
