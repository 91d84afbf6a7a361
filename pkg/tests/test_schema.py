import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relnb.errors import DataError, ParameterError
from relnb.schema import (
    ColumnSpec, TableSchema, RelationalDataset, WindowSpec, apply_window, load_dataset,
    load_schema, save_schema, validate, write_dataset,
)

ROOT = TableSchema((ColumnSpec("Id", "key"), ColumnSpec("Label", "target")))
SEC = TableSchema((ColumnSpec("Id", "key"), ColumnSpec("t", "time"),
                   ColumnSpec("HR", "numeric"), ColumnSpec("Temp", "numeric")))


def hourly_dataset(n=2, times=range(-6, 6)):
    times = list(times)
    owner = np.repeat(np.arange(n), len(times))
    t = np.tile(times, n).astype(float)
    vals = np.column_stack([t * 10, t + 0.5])
    return RelationalDataset.build(ROOT, SEC, [f"p{i}" for i in range(n)], ["0", "1"] * (n // 2),
                                   owner, t, vals, ("HR", "Temp"))


def test_load_roundtrip(tmp_path):
    ds = hourly_dataset()
    write_dataset(ds, tmp_path / "root.tsv", tmp_path / "sec.tsv", tmp_path / "schema.json")
    loaded = load_dataset(tmp_path / "root.tsv", tmp_path / "sec.tsv", load_schema(tmp_path / "schema.json"))
    assert (loaded.n, loaded.m) == (2, 24)
    np.testing.assert_array_equal(loaded.numeric, ds.numeric)
    np.testing.assert_array_equal(loaded.times, ds.times)


def test_comma_delimiter_and_missing(tmp_path):
    (tmp_path / "r.csv").write_text("Id,Label\na,0\nb,1\n")
    (tmp_path / "s.csv").write_text("Id,t,HR,Temp\na,-1,80,\nb,-2,NA,37.1\n")
    ds = load_dataset(tmp_path / "r.csv", tmp_path / "s.csv", (ROOT, SEC))
    assert np.isnan(ds.numeric[0, 1]) and np.isnan(ds.numeric[1, 0])
    assert ds.numeric[1, 1] == 37.1


def test_orphan_key_is_join_error(tmp_path):
    (tmp_path / "r.tsv").write_text("Id\tLabel\na\t0\n")
    (tmp_path / "s.tsv").write_text("Id\tt\tHR\tTemp\na\t-1\t1\t2\nzz\t-1\t1\t2\n")
    with pytest.raises(DataError, match="zz"):
        load_dataset(tmp_path / "r.tsv", tmp_path / "s.tsv", (ROOT, SEC))


def test_malformed_rows_name_location(tmp_path):
    (tmp_path / "r.tsv").write_text("Id\tLabel\na\t0\n")
    (tmp_path / "s.tsv").write_text("Id\tt\tHR\tTemp\na\t-1\tabc\t2\n")
    with pytest.raises(DataError, match=r"line 2, column 'HR'"):
        load_dataset(tmp_path / "r.tsv", tmp_path / "s.tsv", (ROOT, SEC))
    (tmp_path / "s.tsv").write_text("Id\tt\tHR\tTemp\na\t-1\t3\n")
    with pytest.raises(DataError, match="line 2"):
        load_dataset(tmp_path / "r.tsv", tmp_path / "s.tsv", (ROOT, SEC))


def test_header_mismatch(tmp_path):
    (tmp_path / "r.tsv").write_text("Id\tClass\na\t0\n")
    (tmp_path / "s.tsv").write_text("Id\tt\tHR\tTemp\n")
    with pytest.raises(DataError, match="header"):
        load_dataset(tmp_path / "r.tsv", tmp_path / "s.tsv", (ROOT, SEC))


def test_schema_invariants(tmp_path):
    with pytest.raises(DataError):
        TableSchema((ColumnSpec("a", "numeric"),))
    with pytest.raises(DataError):
        TableSchema((ColumnSpec("a", "key"), ColumnSpec("a", "numeric")))
    save_schema(tmp_path / "s.json", ROOT, SEC)
    assert load_schema(tmp_path / "s.json") == (ROOT, SEC)


def retained_times(ds, i=0):
    return ds.times[ds.rows_of(i)].tolist()


def test_window_h1_p6_keeps_six_hours():
    out = apply_window(hourly_dataset(), WindowSpec(p=6, h=1))
    assert retained_times(out) == [-6, -5, -4, -3, -2, -1]


def test_window_h3_p4():
    # grid t in {-6..+5}: rows with t <= -3 are {-6,-5,-4,-3}; with t < -3 only three
    grid = list(range(-6, 6))
    assert [t for t in grid if t <= -3][-4:] == [-6, -5, -4, -3]
    assert [t for t in grid if t < -3][-4:] == [-6, -5, -4]
    ds = hourly_dataset()
    assert retained_times(apply_window(ds, WindowSpec(p=4, h=3))) == [-6, -5, -4, -3]
    assert retained_times(apply_window(ds, WindowSpec(p=4, h=3), strict=True)) == [-6, -5, -4]


def test_window_h0_p1_keeps_last_preonset_row():
    out = apply_window(hourly_dataset(), WindowSpec(p=1, h=0), strict=True)
    assert retained_times(out) == [-1]


def test_window_rejects_p0():
    with pytest.raises(ParameterError):
        WindowSpec(p=0, h=1)


def test_window_drops_empty_individuals():
    owner = [0, 0, 1]
    ds = RelationalDataset.build(ROOT, SEC, ["a", "b"], ["0", "1"], owner, [-3.0, -2.0, 1.0],
                                 np.zeros((3, 2)), ("HR", "Temp"))
    out = apply_window(ds, WindowSpec(p=5, h=1))
    assert out.keys == ("a",) and out.m == 2


@settings(max_examples=60, deadline=None)
@given(
    lengths=st.lists(st.integers(0, 9), min_size=1, max_size=6),
    p=st.integers(1, 8), h=st.integers(0, 5), strict=st.booleans(), seed=st.integers(0, 999),
)
def test_window_properties(lengths, p, h, strict, seed):
    rng = np.random.default_rng(seed)
    owner = np.repeat(np.arange(len(lengths)), lengths)
    times = rng.integers(-10, 6, size=len(owner)).astype(float)
    ds = RelationalDataset.build(ROOT, SEC, [f"k{i}" for i in range(len(lengths))], ["0"] * len(lengths),
                                 owner, times, rng.normal(size=(len(owner), 2)), ("HR", "Temp"))
    w = WindowSpec(p=p, h=h)
    once = apply_window(ds, w, strict=strict)
    counts = once.rows_per_individual()
    assert np.all((counts >= 1) & (counts <= p))
    assert np.all(once.times < -h) if strict else np.all(once.times <= -h)
    assert set(once.keys) <= set(ds.keys)
    twice = apply_window(once, w, strict=strict)
    assert twice.keys == once.keys
    np.testing.assert_array_equal(twice.times, once.times)
    np.testing.assert_array_equal(twice.numeric, once.numeric)
    # individuals with fewer than p usable rows keep all of them
    for i, key in enumerate(once.keys):
        src = ds.keys.index(key)
        t = ds.times[ds.rows_of(src)]
        usable = (t < -h) if strict else (t <= -h)
        assert counts[i] == min(p, usable.sum())


def test_validate_missingness():
    vals = np.arange(20, dtype=float).reshape(10, 2)
    vals[:3, 0] = np.nan
    ds = RelationalDataset.build(ROOT, SEC, ["a", "b"], ["0", "1"], [0] * 5 + [1] * 5,
                                 np.arange(10.0), vals, ("HR", "Temp"))
    rep = validate(ds, missing_threshold=0.2)
    assert rep.missing_rates["HR"] == pytest.approx(0.3)
    assert rep.flagged == ["HR"]
    assert rep.class_counts == {"0": 1, "1": 1}
    assert "FLAG" in rep.to_text()


def test_validate_clean_and_empty():
    assert validate(hourly_dataset()).flagged == []
    ds = RelationalDataset.build(ROOT, SEC, ["a"], ["0"], np.zeros(0, dtype=int), np.zeros(0),
                                 np.zeros((0, 2)), ("HR", "Temp"))
    rep = validate(ds)
    assert rep.m == 0 and any("empty" in w for w in rep.warnings)
