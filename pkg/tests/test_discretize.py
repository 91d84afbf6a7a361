import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relnb import kernels
from relnb.aggregates import AggregateSpec, FlatTable
from relnb.discretize import (
    IntervalPartition, filter_informative, grouping_cost, modl_cost, optimize_discretization,
    optimize_grouping, write_evaluation_report,
)
from relnb.errors import ParameterError

from oracles import exact_modl_cost, exhaustive_discretization


def test_modl_cost_hand_value():
    # ln 4 + ln C(4,0) + ln C(5,1) + ln(4!/(2!2!)) = ln 4 + ln 5 + ln 6
    p = IntervalPartition(np.zeros(0), np.array([[2, 2]]))
    assert modl_cost(p, 4, 2) == pytest.approx(math.log(4) + math.log(5) + math.log(6), abs=1e-12)
    assert modl_cost(p, 4, 2) == pytest.approx(4.787, abs=1e-3)


def test_modl_cost_single_instance():
    for C in (2, 3):
        p = IntervalPartition(np.zeros(0), np.eye(C, dtype=int)[:1])
        assert modl_cost(p) == pytest.approx(math.log(math.comb(C, C - 1)), abs=1e-12)


def test_modl_cost_rejects_empty_interval():
    with pytest.raises(ParameterError):
        modl_cost(IntervalPartition(np.array([1.5]), np.array([[2, 1], [0, 0]])))


def test_modl_cost_matches_exact_integers():
    rng = np.random.default_rng(1)
    for _ in range(50):
        I = rng.integers(1, 6)
        counts = rng.integers(0, 30, size=(I, 2))
        counts[counts.sum(1) == 0, 0] = 1
        p = IntervalPartition(np.arange(I - 1) + 0.5, counts)
        assert modl_cost(p) == pytest.approx(exact_modl_cost(counts), abs=1e-9)


def test_missing_bucket_cost():
    counts = np.array([[5, 1], [1, 6]])
    missing = np.array([2, 3])
    p = IntervalPartition(np.array([0.5]), counts, missing)
    N = 18
    expect = exact_modl_cost(counts, n_total=N) + exact_modl_cost([missing]) - math.log(5)
    assert modl_cost(p) == pytest.approx(expect, abs=1e-9)


@pytest.mark.parametrize("backend", sorted(kernels.available_backends()))
def test_oracle_small_datasets(backend, monkeypatch):
    monkeypatch.setattr(kernels, "backend", kernels.available_backends()[backend])
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 13))
        values = rng.integers(0, rng.integers(1, 8), size=n).astype(float)
        labels = rng.integers(0, 2, size=n)
        part, ev = optimize_discretization(values, labels, classes=2)
        best = exhaustive_discretization(values, labels, 2)
        assert ev.model_cost == pytest.approx(best, abs=1e-9)
        assert modl_cost(part) == pytest.approx(ev.model_cost, abs=1e-12)


def test_example_four_points():
    part, ev = optimize_discretization([1, 2, 3, 4], list("AABB"))
    assert ev.model_cost == pytest.approx(exhaustive_discretization([1, 2, 3, 4], [0, 0, 1, 1], 2), abs=1e-12)


def test_constant_labels_give_null_model():
    part, ev = optimize_discretization(np.arange(30.0), ["A"] * 30, construction_cost=1.0, classes=("A", "B"))
    assert part.n_intervals == 1 and ev.level == 0 and ev.cg <= 0


def test_separable_variable_is_informative():
    x = np.arange(60.0)
    y = (x >= 30).astype(int)
    part, ev = optimize_discretization(x, y, classes=2)
    assert part.n_intervals == 2 and part.boundaries[0] == 29.5
    assert 0 < ev.level <= 1 and ev.cg == ev.level


def test_all_missing():
    part, ev = optimize_discretization([np.nan] * 6, [0, 1] * 3, classes=2)
    assert ev.level == 0 and part.n_intervals == 1


def test_missing_bucket_learned_when_informative():
    x = np.r_[np.full(40, np.nan), np.arange(40.0)]
    y = np.r_[np.ones(40, int), np.zeros(40, int)]
    part, ev = optimize_discretization(x, y, classes=2)
    assert part.missing is not None and list(part.missing) == [0, 40]
    assert part.part_index([np.nan])[0] == part.n_intervals
    assert part.label(part.n_intervals) == "Missing"


def test_part_index_half_open():
    p = IntervalPartition(np.array([2.0, 4.0]), np.ones((3, 2), int))
    np.testing.assert_array_equal(p.part_index([-10, 2.0, 2.0001, 4.0, 9.0, np.nan]), [0, 0, 1, 1, 2, 0])
    assert [p.label(i) for i in range(3)] == ["]-inf, 2.0]", "]2.0, 4.0]", "]4.0, +inf["]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 200), grid=st.integers(2, 40),
       cc=st.floats(0, 5))
def test_properties(seed, n, grid, cc):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, grid, n).astype(float)
    y = (rng.random(n) < 0.3 + 0.4 * (x > grid / 2)).astype(int)
    part, ev = optimize_discretization(x, y, cc, classes=2)
    assert 0 <= ev.level <= 1
    perm = rng.permutation(n)
    part2, ev2 = optimize_discretization(x[perm], y[perm], cc, classes=2)
    np.testing.assert_array_equal(part.boundaries, part2.boundaries)
    assert ev.model_cost == ev2.model_cost
    _, ev3 = optimize_discretization(x, y, cc + 1.0, classes=2)
    assert ev3.cg <= ev.cg
    u = np.unique(x)
    for b in part.boundaries:
        k = np.searchsorted(u, b)
        assert 0 < k < len(u) and u[k - 1] < b < u[k]


def test_large_greedy_backends_agree():
    rng = np.random.default_rng(3)
    x = rng.normal(size=3000)
    y = (rng.random(3000) < 1 / (1 + np.exp(-2 * x))).astype(int)
    results = {}
    for name, be in kernels.available_backends().items():
        lf = kernels.log_factorial_table(2 * 3000 + 2)
        counts = np.stack([np.bincount(np.argsort(np.argsort(x)) * 2 + y, minlength=6000)[0::2],
                           np.bincount(np.argsort(np.argsort(x)) * 2 + y, minlength=6000)[1::2]], 1)
        results[name] = be.optimize_partition(counts, 3000, 3000, 64, lf)
    first = next(iter(results.values()))
    for starts, cost in results.values():
        np.testing.assert_array_equal(starts, first[0])
        assert cost == first[1]


def test_greedy_is_near_exact():
    # above the exact limit the heuristic should still land on (or very near) the DP optimum
    rng = np.random.default_rng(11)
    be = kernels.backend
    for _ in range(20):
        n = 80
        counts = rng.integers(0, 5, size=(n, 2))
        counts[counts.sum(1) == 0, 1] = 1
        nobs = int(counts.sum())
        lf = kernels.log_factorial_table(2 * nobs + 2)
        _, greedy = be.optimize_partition(counts, nobs, nobs, 0, lf)
        _, exact = be.optimize_partition(counts, nobs, nobs, n, lf)
        assert exact <= greedy + 1e-9
        assert greedy - exact < 0.02 * exact


def test_grouping_two_aligned_values():
    vals = ["x"] * 20 + ["y"] * 20
    labels = ["A"] * 20 + ["B"] * 20
    g, ev = optimize_grouping(vals, labels)
    assert g.n_parts == 2 and ev.cg > 0
    two = grouping_cost(np.array([[20, 0], [0, 20]]), 2)
    one = grouping_cost(np.array([[20, 20]]), 2)
    assert two == pytest.approx(3 * math.log(2) + 2 * math.log(21))
    assert two < one
    assert ev.model_cost == pytest.approx(two)


def test_grouping_degenerate():
    g, ev = optimize_grouping(["a"] * 10, [0, 1] * 5, classes=2)
    assert g.n_parts == 1 and ev.level == 0
    g, ev = optimize_grouping([None] * 10, [0, 1] * 5, classes=2)
    assert g.n_parts == 1 and ev.level == 0


def test_grouping_merges_redundant_values():
    vals = ["a", "b", "c", "d"] * 25
    labels = [0, 0, 1, 1] * 25
    g, _ = optimize_grouping(vals, labels, classes=2)
    assert sorted(g.groups) == [("a", "b"), ("c", "d")]
    assert list(g.part_index(["a", "d", "zzz"])) == [0, 1, int(np.argmax(g.counts.sum(1)))]


def test_filter_informative(tmp_path):
    rng = np.random.default_rng(0)
    n = 300
    y = np.array(["0", "1"])[rng.integers(0, 2, n)]
    signal = (y == "1") + rng.normal(scale=0.3, size=n)
    values = np.column_stack([signal, np.ones(n), rng.normal(size=n)])
    specs = (AggregateSpec("Min", "a", construction_cost=3.0), AggregateSpec("Max", "b", construction_cost=3.0),
             AggregateSpec("Mean", "c", construction_cost=3.0))
    flat = FlatTable(tuple(map(str, range(n))), y, specs, values)
    kept, evals = filter_informative(flat)
    assert kept.names == ["Min(a)"]
    assert len(evals) == 3 and evals[1].level == 0
    kept2, evals2 = filter_informative(flat, threads=3)
    assert [e.model_cost for e in evals2] == [e.model_cost for e in evals]
    write_evaluation_report(evals, tmp_path / "ev.tsv")
    lines = (tmp_path / "ev.tsv").read_text().splitlines()
    assert lines[0].split("\t")[:2] == ["Name", "Level"] and lines[1].startswith("Min(a)")


def test_filter_constant_columns():
    flat = FlatTable(("a", "b", "c", "d"), np.array(["0", "1", "0", "1"]),
                     (AggregateSpec("Count"),), np.ones((4, 1)))
    kept, evals = filter_informative(flat)
    assert kept.values.shape == (4, 0)
