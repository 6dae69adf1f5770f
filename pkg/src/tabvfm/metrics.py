"""Fidelity, detection, privacy and utility metrics for synthetic tables.

All table-level functions take imputed :class:`RawTable` objects and align
columns by name, so column order never matters.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from . import _kernels
from .data import RawTable, SchemaError, encode, fit_maps
from .quantile import fit_quantile

TREND_BINS = 10
C2ST_FOLDS = 5
LOGREG_L2 = 1e-4
LOGREG_EPOCHS = 500
RIDGE_L2 = 1e-3


# -- per-column statistics ---------------------------------------------------

def ks_statistic(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| with right-continuous empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs non-empty samples")
    return _kernels.ks_sorted(a, b)


def tvd(real_counts: Mapping, syn_counts: Mapping) -> float:
    """Total variation between two count tables; missing keys have zero mass."""
    nr = sum(real_counts.values())
    ns = sum(syn_counts.values())
    if nr <= 0 or ns <= 0:
        raise ValueError("TVD needs non-empty count tables")
    keys = set(real_counts) | set(syn_counts)
    # integer numerators keep the result exact up to the final division
    gap = sum(abs(real_counts.get(k, 0) * ns - syn_counts.get(k, 0) * nr) for k in keys)
    return gap / (2 * nr * ns)


def tvd_values(a, b) -> float:
    return tvd(Counter(a), Counter(b))


def wasserstein1(a, b) -> float:
    """W1 between empirical distributions, via their quantile functions."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("Wasserstein distance needs non-empty samples")
    return _kernels.w1_sorted(a, b)


def _check_columns(real: RawTable, syn: RawTable) -> None:
    if set(real.schema.names) != set(syn.schema.names):
        raise SchemaError(
            f"column mismatch: real has {sorted(real.schema.names)}, syn has {sorted(syn.schema.names)}"
        )
    for col in real.schema.columns:
        if syn.schema.column(col.name).kind != col.kind:
            raise SchemaError(f"column {col.name!r} has different kinds in real and synthetic data")


# -- Shape ---------------------------------------------------------------------

def shape_columns(real: RawTable, syn: RawTable) -> dict[str, float]:
    _check_columns(real, syn)
    out = {}
    for col in real.schema.columns:
        if col.is_numerical:
            out[col.name] = ks_statistic(real[col.name], syn[col.name])
        else:
            out[col.name] = tvd_values(real[col.name], syn[col.name])
    return out


def shape_error(real: RawTable, syn: RawTable) -> float:
    """100 x mean per-column KS (numerical) / TVD (categorical)."""
    return 100.0 * float(np.mean(list(shape_columns(real, syn).values())))


# -- Trend ---------------------------------------------------------------------

def _pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    y = np.asarray(y, dtype=np.float64) - np.mean(y)
    den = np.sqrt(np.sum(x * x) * np.sum(y * y))
    return float(np.sum(x * y) / den) if den > 0 else 0.0


def _bin_edges(values) -> np.ndarray:
    return np.quantile(np.asarray(values, dtype=np.float64), np.linspace(0, 1, TREND_BINS + 1)[1:-1])


def _discrete(table: RawTable, name: str, edges: dict) -> np.ndarray:
    col = table.schema.column(name)
    if col.is_numerical:
        return np.searchsorted(edges[name], table[name], side="right").astype(object)
    return table[name]


def _contingency_tvd(ra, rb, sa, sb) -> float:
    return tvd(Counter(zip(ra, rb)), Counter(zip(sa, sb)))


def trend_pairs(real: RawTable, syn: RawTable) -> dict[tuple[str, str], float]:
    _check_columns(real, syn)
    names = real.schema.names
    if len(names) < 2:
        raise ValueError("trend error needs at least two columns (no pairs)")
    edges = {c.name: _bin_edges(real[c.name]) for c in real.schema.numerical}
    out = {}
    for a, b in itertools.combinations(names, 2):
        ca, cb = real.schema.column(a), real.schema.column(b)
        if ca.is_numerical and cb.is_numerical:
            out[(a, b)] = abs(_pearson(real[a], real[b]) - _pearson(syn[a], syn[b])) / 2.0
        else:
            out[(a, b)] = _contingency_tvd(
                _discrete(real, a, edges), _discrete(real, b, edges),
                _discrete(syn, a, edges), _discrete(syn, b, edges),
            )
    return out


def trend_error(real: RawTable, syn: RawTable) -> float:
    """100 x mean pairwise dependence error (correlation or contingency)."""
    return 100.0 * float(np.mean(list(trend_pairs(real, syn).values())))


# -- Wasserstein -----------------------------------------------------------------

def wd_columns(reference: RawTable, syn: RawTable) -> dict[str, float]:
    """Per-column W1 on quantile-transformed numericals (maps fitted on the
    reference table), TVD on categoricals."""
    _check_columns(reference, syn)
    out = {}
    for col in reference.schema.columns:
        if col.is_numerical:
            qmap = fit_quantile(reference[col.name])
            out[col.name] = wasserstein1(qmap.apply(reference[col.name]), qmap.apply(syn[col.name]))
        else:
            out[col.name] = tvd_values(reference[col.name], syn[col.name])
    return out


def table_wd(reference: RawTable, syn: RawTable) -> float:
    return float(np.mean(list(wd_columns(reference, syn).values())))


# -- linear models ----------------------------------------------------------------

def _standardize(train: np.ndarray, *others: np.ndarray):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return [(a - mean) / std for a in (train, *others)]


def fit_logistic(x: np.ndarray, y: np.ndarray, l2: float = LOGREG_L2, epochs: int = LOGREG_EPOCHS):
    """Full-batch gradient descent on L2-regularised log-loss (step 1/L).

    Returns ``(weights, intercept)``; the intercept is not penalised.
    """
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    lip = 0.25 * np.linalg.eigvalsh(xb.T @ xb / n)[-1] + l2
    lr = 1.0 / lip
    w = np.zeros(d + 1)
    reg = np.full(d + 1, l2)
    reg[-1] = 0.0
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-np.clip(xb @ w, -500, 500)))
        w -= lr * (xb.T @ (p - y) / n + reg * w)
    return w[:-1], w[-1]


def auc(y_true, score) -> float:
    """ROC AUC via the Mann-Whitney rank statistic (ties averaged)."""
    y_true = np.asarray(y_true).astype(bool)
    n_pos, n_neg = y_true.sum(), (~y_true).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(score)
    return float((ranks[y_true].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _stratified_folds(y: np.ndarray, k: int, rng) -> np.ndarray:
    fold = np.empty(len(y), dtype=np.int64)
    for cls in np.unique(y):
        idx = rng.permutation(np.nonzero(y == cls)[0])
        fold[idx] = np.arange(len(idx)) % k
    return fold


# -- C2ST ----------------------------------------------------------------------------

def c2st_auc(real: RawTable, syn: RawTable, seed: int = 0) -> float:
    _check_columns(real, syn)
    if len(real) < 10 or len(syn) < 10:
        raise ValueError("C2ST needs at least 10 rows on each side")
    syn = _reorder(syn, real)
    maps = fit_maps(real)
    x = np.vstack([encode(real, maps, unknown="ignore"), encode(syn, maps, unknown="ignore")]).astype(np.float64)
    y = np.concatenate([np.ones(len(real)), np.zeros(len(syn))])
    folds = _stratified_folds(y, C2ST_FOLDS, np.random.default_rng(seed))
    aucs = []
    for k in range(C2ST_FOLDS):
        test = folds == k
        xtr, xte = _standardize(x[~test], x[test])
        w, b = fit_logistic(xtr, y[~test])
        aucs.append(auc(y[test], xte @ w + b))
    return float(np.mean(aucs))


def c2st_score(real: RawTable, syn: RawTable, seed: int = 0) -> float:
    """Detection score in [0, 1]; 1 means the classifier cannot tell the tables apart."""
    return 2.0 * (1.0 - max(c2st_auc(real, syn, seed), 0.5))


def _reorder(table: RawTable, like: RawTable) -> RawTable:
    """Give ``table`` the schema of ``like`` (same column set assumed)."""
    return RawTable(like.schema, {n: table[n] for n in like.schema.names})


# -- DCR -----------------------------------------------------------------------------

def _mixed_features(table: RawTable, ref: RawTable, maps) -> tuple[np.ndarray, np.ndarray]:
    num = np.column_stack(
        [maps[c.name].apply(table[c.name]) for c in ref.schema.numerical]
    ) if ref.schema.numerical else np.zeros((len(table), 0))
    cats = []
    for c in ref.schema.categorical:
        index = {v: i for i, v in enumerate(c.categories)}
        cats.append([index.get(v, -1) for v in table[c.name]])
    cat = np.array(cats, dtype=np.int64).T if cats else np.zeros((len(table), 0), dtype=np.int64)
    return num, cat.reshape(len(table), -1)


def dcr_distances(syn: RawTable, train: RawTable, holdout: RawTable) -> tuple[np.ndarray, np.ndarray]:
    """Closest-record distances of every synthetic row to train and holdout.

    Numerical columns contribute ``|dz|`` in the train-fitted quantile space,
    categorical columns a 0/1 mismatch.
    """
    _check_columns(train, syn)
    _check_columns(train, holdout)
    maps = fit_maps(train)
    s = _mixed_features(syn, train, maps)
    t = _mixed_features(train, train, maps)
    h = _mixed_features(holdout, train, maps)
    return _kernels.nearest_mixed_distance(*s, *t), _kernels.nearest_mixed_distance(*s, *h)


def dcr_score(syn: RawTable, train: RawTable, holdout: RawTable) -> float:
    """Percent of synthetic rows closer to train than to holdout (ties count half); 50 is ideal."""
    d_train, d_hold = dcr_distances(syn, train, holdout)
    closer = np.mean(d_train < d_hold)
    tied = np.mean(d_train == d_hold)
    return float(100.0 * (closer + 0.5 * tied))


# -- MLE-lite --------------------------------------------------------------------------

def _design(table: RawTable, ref: RawTable, target: str) -> np.ndarray:
    parts = []
    for c in ref.schema.columns:
        if c.name == target:
            continue
        if c.is_numerical:
            parts.append(np.asarray(table[c.name], dtype=np.float64)[:, None])
        else:
            cats = sorted(set(ref[c.name]))
            parts.append(np.column_stack([table[c.name] == v for v in cats]).astype(np.float64))
    return np.hstack(parts) if parts else np.zeros((len(table), 0))


def mle_lite(syn_train: RawTable, real_test: RawTable, task: str, target: str) -> float:
    """Train a linear model on synthetic rows, score it on real rows.

    Classification returns ROC AUC (one-vs-rest macro average beyond two
    classes); regression returns RMSE of a ridge fit.
    """
    _check_columns(real_test, syn_train)
    if target not in real_test.schema.names:
        raise SchemaError(f"unknown target column {target!r}")
    x_tr, x_te = _standardize(_design(syn_train, syn_train, target), _design(real_test, syn_train, target))
    if task == "regression":
        y_tr = np.asarray(syn_train[target], dtype=np.float64)
        y_te = np.asarray(real_test[target], dtype=np.float64)
        xb = np.hstack([x_tr, np.ones((len(x_tr), 1))])
        reg = RIDGE_L2 * np.eye(xb.shape[1])
        reg[-1, -1] = 0.0
        coef = np.linalg.solve(xb.T @ xb + reg, xb.T @ y_tr)
        pred = np.hstack([x_te, np.ones((len(x_te), 1))]) @ coef
        return float(np.sqrt(np.mean((pred - y_te) ** 2)))
    if task != "classification":
        raise ValueError(f"unknown task {task!r}")
    classes = sorted(set(real_test[target]) | set(syn_train[target]), key=str)
    if len(classes) < 2:
        raise ValueError("classification target needs at least two classes")
    positives = classes[-1:] if len(classes) == 2 else classes
    scores = []
    for cls in positives:
        y_tr = (syn_train[target] == cls).astype(np.float64)
        y_te = (real_test[target] == cls).astype(np.float64)
        if y_te.min() == y_te.max():
            continue
        if y_tr.min() == y_tr.max():
            scores.append(0.5)
            continue
        w, b = fit_logistic(x_tr, y_tr)
        scores.append(auc(y_te, x_te @ w + b))
    if not scores:
        raise ValueError("test set has a single class; AUC undefined")
    return float(np.mean(scores))


# -- report ------------------------------------------------------------------------------

@dataclass
class MetricReport:
    shape_error_pct: float
    trend_error_pct: float | None
    wd_train: float
    wd_test: float | None = None
    c2st_score: float | None = None
    dcr_pct: float | None = None
    mle: float | None = None
    mle_metric: str | None = None
    shape_columns: dict = field(default_factory=dict)
    trend_pairs: dict = field(default_factory=dict)
    wd_columns: dict = field(default_factory=dict)
    notices: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trend_pairs"] = {f"{a}|{b}": v for (a, b), v in self.trend_pairs.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("shape error (%)", self.shape_error_pct),
            ("trend error (%)", self.trend_error_pct),
            ("WD vs train", self.wd_train),
            ("WD vs test", self.wd_test),
            ("C2ST score", self.c2st_score),
            ("DCR (%)", self.dcr_pct),
            (f"MLE-lite {self.mle_metric or ''}".strip(), self.mle),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {'-' if v is None else f'{v:.4f}':>10}" for name, v in rows]
        lines += [f"note: {n}" for n in self.notices]
        return "\n".join(lines)


def evaluate(real: RawTable, syn: RawTable, holdout: RawTable | None = None,
             task: str | None = None, target: str | None = None, seed: int = 0) -> MetricReport:
    shape_cols = shape_columns(real, syn)
    notices = []
    if len(real.schema.columns) >= 2:
        pairs = trend_pairs(real, syn)
        trend = 100.0 * float(np.mean(list(pairs.values())))
    else:
        pairs, trend = {}, None
        notices.append("trend omitted: fewer than two columns")
    wd_cols = wd_columns(real, syn)
    report = MetricReport(
        shape_error_pct=100.0 * float(np.mean(list(shape_cols.values()))),
        trend_error_pct=trend,
        wd_train=float(np.mean(list(wd_cols.values()))),
        shape_columns=shape_cols,
        trend_pairs=pairs,
        wd_columns=wd_cols,
        notices=notices,
    )
    if len(real) >= 10 and len(syn) >= 10:
        report.c2st_score = c2st_score(real, syn, seed)
    else:
        notices.append("C2ST omitted: fewer than 10 rows on a side")
    if holdout is None:
        notices.append("DCR and WD-test omitted: no holdout table")
    else:
        report.wd_test = table_wd(holdout, syn)
        report.dcr_pct = dcr_score(syn, real, holdout)
    if task:
        if target is None:
            raise ValueError("MLE-lite needs a target column")
        if holdout is None:
            notices.append("MLE-lite omitted: no holdout table to test on")
        else:
            report.mle = mle_lite(syn, holdout, task, target)
            report.mle_metric = "AUC" if task == "classification" else "RMSE"
    return report
