import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabvfm import data
from tabvfm.data import CATEGORICAL, MISSING, NUMERICAL, ColumnSpec, RawTable, SchemaError, TableSchema
from tabvfm.quantile import fit_quantile, norm_ppf
from tabvfm.sampler import decode


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- load_csv ---------------------------------------------------------------

def test_load_with_schema_file(tmp_path):
    p = write(tmp_path, "age,job\n30,a\n41,b\n,a\n")
    schema = {"columns": [{"name": "age", "kind": "numerical"}, {"name": "job", "kind": "categorical"}]}
    t = data.load_csv(p, schema)
    assert [c.kind for c in t.schema.columns] == [NUMERICAL, CATEGORICAL]
    assert t.schema.column("job").categories == ("a", "b")
    assert np.isnan(t["age"][2])
    assert t.missing_mask("age").tolist() == [False, False, True]


def test_inference_rule():
    few = [str(i) for i in range(20)]
    many = [str(i) for i in range(21)]
    assert data.infer_column("a", few).kind == CATEGORICAL
    assert data.infer_column("a", many).kind == NUMERICAL
    assert data.infer_column("a", many[:-1] + ["x"]).kind == CATEGORICAL
    assert data.infer_column("a", many + [""]).kind == NUMERICAL


def test_inferred_small_table_is_categorical(tmp_path):
    p = write(tmp_path, "age,job\n30,a\n41,b\n52,a\n")
    t = data.load_csv(p)
    assert t.schema.column("job").categories == ("a", "b")
    # three distinct values is far below the numerical threshold
    assert t.schema.column("age").kind == CATEGORICAL


def test_quoted_empty_is_missing(tmp_path):
    p = write(tmp_path, 'a,b\n"",x\n"1,5",y\n')
    t = data.load_csv(p)
    assert t["a"][0] is None
    assert t["a"][1] == "1,5"


@pytest.mark.parametrize(
    "text, message",
    [
        ("a,b\n", "empty table"),
        ("a,b\n1,2,3\n", "ragged"),
        ("", "header"),
    ],
)
def test_load_errors(tmp_path, text, message):
    with pytest.raises(SchemaError, match=message):
        data.load_csv(write(tmp_path, text))


def test_header_schema_mismatch(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n")
    schema = TableSchema((ColumnSpec("a", NUMERICAL), ColumnSpec("c", NUMERICAL)))
    with pytest.raises(SchemaError, match="does not match"):
        data.load_csv(p, schema)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        data.load_csv(tmp_path / "nope.csv")


def test_schema_invariants():
    with pytest.raises(SchemaError):
        ColumnSpec("a", CATEGORICAL, ("x", "x"))
    with pytest.raises(SchemaError):
        ColumnSpec("a", CATEGORICAL, ())
    with pytest.raises(SchemaError):
        ColumnSpec("a", NUMERICAL, ("x",))
    with pytest.raises(SchemaError):
        TableSchema((ColumnSpec("a", NUMERICAL), ColumnSpec("a", NUMERICAL)))
    s = TableSchema((
        ColumnSpec("n", NUMERICAL),
        ColumnSpec("c", CATEGORICAL, ("p", "q", "r")),
        ColumnSpec("k", CATEGORICAL, ("only",)),
    ))
    assert s.encoded_dim == 1 + 3
    assert s.offsets == [0, 1, 4]


def test_schema_json_round_trip(tmp_path):
    s = TableSchema((ColumnSpec("n", NUMERICAL), ColumnSpec("c", CATEGORICAL, ("p", MISSING), True)))
    assert TableSchema.from_dict(json.loads(json.dumps(s.to_dict()))) == s


# -- impute -----------------------------------------------------------------

def _table(**cols):
    specs = []
    for name, values in cols.items():
        if isinstance(values[0], (int, float)) or values[0] is None and isinstance(values[-1], (int, float)):
            specs.append(ColumnSpec(name, NUMERICAL))
        else:
            specs.append(ColumnSpec(name, CATEGORICAL, tuple(sorted({v for v in values if v is not None}))))
    arrays = {}
    for spec, (name, values) in zip(specs, cols.items()):
        if spec.is_numerical:
            arrays[name] = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
        else:
            arrays[name] = np.array(values, dtype=object)
    return RawTable(TableSchema(tuple(specs)), arrays)


def test_impute_numerical_mean():
    t = data.impute(_table(age=[1.0, None, 3.0]))
    assert t["age"].tolist() == [1.0, 2.0, 3.0]


def test_impute_categorical_new_category():
    t = data.impute(_table(job=["a", None]))
    col = t.schema.column("job")
    assert col.categories == ("a", MISSING)
    assert col.missing_category_added
    assert t["job"].tolist() == ["a", MISSING]


def test_impute_identity_without_missing():
    t = _table(age=[1.0, 2.0], job=["a", "b"])
    out = data.impute(t)
    assert out.schema == t.schema
    assert out["age"].tolist() == [1.0, 2.0]
    assert out["job"].tolist() == ["a", "b"]


def test_impute_all_missing_numerical():
    t = RawTable(TableSchema((ColumnSpec("a", NUMERICAL),)), {"a": np.array([np.nan, np.nan])})
    with pytest.raises(ValueError, match="no non-missing"):
        data.impute(t)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=1, max_size=30).filter(
    lambda xs: any(x is not None for x in xs)))
def test_impute_preserves_present_cells(values):
    t = RawTable(TableSchema((ColumnSpec("a", NUMERICAL),)),
                 {"a": np.array([np.nan if v is None else v for v in values])})
    out = data.impute(t)
    for v, o in zip(values, out["a"]):
        if v is not None:
            assert o == v


# -- quantile transform ------------------------------------------------------

def test_fit_quantile_sorts():
    m = fit_quantile([5, 1, 3])
    assert m.values.tolist() == [1, 3, 5]
    assert m.n == 3


def test_fit_quantile_ties_and_errors():
    m = fit_quantile([2, 2])
    assert m.values.tolist() == [2, 2]
    # tied values share the average rank 1.5 -> F = 0.5
    assert m.apply(2.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        fit_quantile([1])


def test_quantile_apply_midpoint():
    m = fit_quantile([1, 2, 3, 4, 5])
    # plotting position of rank 3 of 5 is (3 - 0.5) / 5 = 0.5
    assert m.apply(3.0) == pytest.approx(0.0, abs=1e-15)


def test_quantile_apply_clamps():
    m = fit_quantile([1, 2, 3, 4, 5])
    lo = norm_ppf(1 / 10)
    assert m.apply(-100.0) == pytest.approx(lo, abs=1e-12)
    assert m.apply(1.0) == pytest.approx(lo, abs=1e-12)
    assert m.apply(1e9) == pytest.approx(-lo, abs=1e-12)


def test_quantile_invert():
    m = fit_quantile([1, 2, 3, 4, 5])
    assert m.invert(0.0) == pytest.approx(3.0, abs=1e-12)
    assert m.invert(10.0) == 5.0
    assert m.invert(-10.0) == 1.0


def test_quantile_round_trip_on_reference_values():
    rng = np.random.default_rng(3)
    values = np.concatenate([rng.normal(size=200), rng.integers(0, 5, size=50)])
    m = fit_quantile(values)
    # brute force over every stored value
    back = m.invert(m.apply(m.values))
    np.testing.assert_allclose(back, m.values, rtol=0, atol=1e-9)


def test_norm_ppf_accuracy():
    # oracle: bisection on the CDF, independent of the rational approximation
    from scipy.special import ndtr

    p = np.array([1e-10, 1e-4, 0.01, 0.02425, 0.3, 0.5, 0.77, 0.97575, 0.999, 1 - 1e-9])
    lo, hi = np.full_like(p, -40.0), np.full_like(p, 40.0)
    for _ in range(200):
        mid = (lo + hi) / 2
        below = ndtr(mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    np.testing.assert_allclose(norm_ppf(p), (lo + hi) / 2, atol=1e-8, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40),
       st.lists(st.floats(-2e3, 2e3), min_size=2, max_size=40))
def test_quantile_apply_monotone(ref, probe):
    m = fit_quantile(ref)
    probe = np.sort(probe)
    z = m.apply(probe)
    assert np.all(np.diff(z) >= 0)


# -- encode / decode ------------------------------------------------------------

def test_encode_row():
    schema = TableSchema((ColumnSpec("age", NUMERICAL), ColumnSpec("job", CATEGORICAL, ("a", "b"))))
    t = RawTable(schema, {"age": np.array([3.0, 1.0, 5.0]), "job": np.array(["a", "b", "a"], dtype=object)})
    maps = data.fit_maps(t)
    x = data.encode(t, maps)
    assert x.dtype == np.float32
    assert x.shape == (3, 3)
    assert x[0].tolist() == [pytest.approx(float(maps["age"].apply(3.0)), abs=1e-7), 1.0, 0.0]
    assert x[1, 1:].tolist() == [0.0, 1.0]


def test_encode_unknown_category():
    schema = TableSchema((ColumnSpec("job", CATEGORICAL, ("a", "b")),))
    t = RawTable(schema, {"job": np.array(["a", "zzz"], dtype=object)})
    with pytest.raises(ValueError, match="not in schema"):
        data.encode(t, {})
    assert data.encode(t, {}, unknown="ignore")[1].tolist() == [0.0, 0.0]


def random_table(rng, n=100):
    schema = TableSchema((
        ColumnSpec("u", NUMERICAL),
        ColumnSpec("c", CATEGORICAL, ("x", "y", "z")),
        ColumnSpec("v", NUMERICAL),
        ColumnSpec("b", CATEGORICAL, ("no", "yes")),
        ColumnSpec("k", CATEGORICAL, ("const",)),
    ))
    return RawTable(schema, {
        "u": rng.normal(size=n) * 100,
        "c": rng.choice(np.array(["x", "y", "z"], dtype=object), size=n),
        "v": rng.integers(0, 7, size=n).astype(float),
        "b": rng.choice(np.array(["no", "yes"], dtype=object), size=n),
        "k": np.array(["const"] * n, dtype=object),
    })


@pytest.mark.parametrize("seed", range(5))
def test_encode_decode_round_trip(seed):
    t = random_table(np.random.default_rng(seed))
    maps = data.fit_maps(t)
    x = data.encode(t, maps)
    blocks = x[:, 1:4].sum(axis=1), x[:, 5:7].sum(axis=1)
    for b in blocks:
        assert np.all(b == 1.0)
    back = decode(x.astype(np.float64), t.schema, maps)
    for name in t.schema.names:
        if t.schema.column(name).is_numerical:
            # float32 z-scores bound the achievable precision
            np.testing.assert_allclose(back[name], t[name], rtol=1e-5, atol=1e-5)
        else:
            assert back[name].tolist() == t[name].tolist()


# -- split ---------------------------------------------------------------------

def test_split_sizes_and_determinism():
    t = random_table(np.random.default_rng(0), n=10)
    tr, va, te = data.split(t, (0.8, 0.1, 0.1), seed=4)
    assert (len(tr), len(va), len(te)) == (8, 1, 1)
    tr2, va2, te2 = data.split(t, (0.8, 0.1, 0.1), seed=4)
    assert tr["u"].tolist() == tr2["u"].tolist()
    assert sorted(tr["u"].tolist() + va["u"].tolist() + te["u"].tolist()) == sorted(t["u"].tolist())


def test_split_bad_ratios():
    t = random_table(np.random.default_rng(0), n=10)
    with pytest.raises(ValueError):
        data.split(t, (0.5, 0.1, 0.1))


def test_csv_write_read_round_trip(tmp_path):
    t = random_table(np.random.default_rng(1), n=30)
    p = tmp_path / "out.csv"
    data.write_csv(t, p)
    back = data.load_csv(p, t.schema)
    np.testing.assert_array_equal(back["u"], t["u"])
    assert back["c"].tolist() == t["c"].tolist()
