"""Aggregate feature construction over the secondary table.

An aggregate is ``Function(operand) [where column <=|> threshold]``. The
candidate specs are drawn from a prior whose code length is exactly the
spec's construction cost, so that cost can be charged to the variable
during supervised evaluation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .schema import RelationalDataset

FUNCTIONS = ("Min", "Max", "Mean", "Median", "StdDev", "Sum", "Count")
DIRECTIONS = ("<=", ">")
MAX_THRESHOLDS = 100


def midpoint(a: float, b: float) -> float:
    """A cut value strictly between ``a < b``, snapped to a short decimal when possible."""
    mid = a + (b - a) / 2.0
    short = float(f"{mid:.12g}")
    if a < short < b:
        return short
    return mid if a < mid < b else a


def fmt_number(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class AggregateSpec:
    function: str
    operand: str | None = None
    selector: tuple[str, str, float] | None = None
    construction_cost: float = 0.0

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise ParameterError(f"unknown aggregate function {self.function!r}")
        if (self.function == "Count") != (self.operand is None):
            raise ParameterError("Count takes no operand; every other function needs one")
        if self.selector is not None:
            col, direction, thr = self.selector
            if direction not in DIRECTIONS:
                raise ParameterError(f"selector direction must be one of {DIRECTIONS}")
            if not math.isfinite(thr):
                raise ParameterError("selector threshold must be finite")
            object.__setattr__(self, "selector", (str(col), direction, float(thr)))

    @property
    def display_name(self) -> str:
        name = f"{self.function}({self.operand or ''})"
        if self.selector is not None:
            col, direction, thr = self.selector
            name += f" where {col} {direction} {fmt_number(thr)}"
        return name

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "operand": self.operand,
            "selector": list(self.selector) if self.selector else None,
            "construction_cost": self.construction_cost,
            "display_name": self.display_name,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AggregateSpec":
        sel = doc.get("selector")
        return cls(doc["function"], doc.get("operand"), tuple(sel) if sel else None,
                   float(doc.get("construction_cost", 0.0)))


def construction_cost(spec: AggregateSpec, d_sec: int, n_thresholds: int | None = None,
                      selector_bit: bool = True) -> float:
    """Code length in nats of drawing ``spec`` from the generation prior.

    ``n_thresholds`` is the size of the selector column's threshold grid;
    ``selector_bit=False`` is the prior used when selectors are disabled.
    """
    if d_sec < 1:
        raise ParameterError("need at least one numeric secondary column")
    cost = math.log(len(FUNCTIONS))
    if spec.function != "Count":
        cost += math.log(d_sec)
    if selector_bit:
        cost += math.log(2)
    if spec.selector is not None:
        if not n_thresholds:
            raise ParameterError("a selector needs a non-empty threshold grid")
        cost += math.log(d_sec) + math.log(2) + math.log(n_thresholds)
    return cost


def threshold_grid(values: np.ndarray, cap: int = MAX_THRESHOLDS) -> np.ndarray:
    """Midpoints between consecutive distinct values, at most ``cap`` of them.

    Beyond the cap, the midpoints bracketing ``cap`` equally spaced quantiles
    of the value distribution are kept.
    """
    vals = np.sort(values[~np.isnan(values)])
    u = np.unique(vals)
    if len(u) < 2:
        return np.zeros(0)
    if len(u) - 1 <= cap:
        return np.array([midpoint(a, b) for a, b in zip(u[:-1], u[1:])])
    qs = np.quantile(vals, np.arange(1, cap + 1) / (cap + 1), method="lower")
    idx = np.minimum(np.searchsorted(u, qs), len(u) - 2)
    idx = np.unique(idx)
    return np.array([midpoint(u[i], u[i + 1]) for i in idx])


def _enumerate(columns: Sequence[str], grids: Mapping[str, np.ndarray],
               allow_selectors: bool) -> Iterator[tuple]:
    """All expressible (function, operand, selector) triples in canonical order."""
    selectors: list = [None]
    if allow_selectors:
        selectors += [(c, dr, float(t)) for c in columns for dr in DIRECTIONS for t in grids[c]]
    for f in FUNCTIONS:
        operands = [None] if f == "Count" else list(columns)
        for op, sel in product(operands, selectors):
            yield f, op, sel


def generate_aggregates(ds: RelationalDataset, q: int, seed: int, allow_selectors: bool = True,
                        max_thresholds: int = MAX_THRESHOLDS) -> list[AggregateSpec]:
    if q < 1:
        raise ParameterError(f"Q must be >= 1, got {q}")
    columns = list(ds.numeric_names)
    d = len(columns)
    if d == 0:
        raise ParameterError("the secondary table has no numeric column to aggregate")
    grids = {c: threshold_grid(ds.numeric[:, j], max_thresholds) for j, c in enumerate(columns)}

    def make(f, op, sel):
        spec = AggregateSpec(f, op, sel)
        t = len(grids[sel[0]]) if sel else None
        return AggregateSpec(f, op, sel, construction_cost(spec, d, t, selector_bit=allow_selectors))

    rng = np.random.default_rng(seed)
    seen: dict[str, AggregateSpec] = {}
    attempts = 0
    while len(seen) < q and attempts < 50 * q:
        attempts += 1
        f = FUNCTIONS[rng.integers(len(FUNCTIONS))]
        op = None if f == "Count" else columns[rng.integers(d)]
        sel = None
        if allow_selectors and rng.integers(2):
            col = columns[rng.integers(d)]
            direction = DIRECTIONS[rng.integers(2)]
            grid = grids[col]
            if len(grid) == 0:
                continue
            sel = (col, direction, float(grid[rng.integers(len(grid))]))
        spec = make(f, op, sel)
        seen.setdefault(spec.display_name, spec)
    if len(seen) < q:
        for f, op, sel in _enumerate(columns, grids, allow_selectors):
            spec = make(f, op, sel)
            seen.setdefault(spec.display_name, spec)
            if len(seen) >= q:
                break
    return list(seen.values())


def _passes(values: np.ndarray, direction: str, thr: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        hit = values > thr if direction == ">" else values <= thr
    return hit & ~np.isnan(values)


def evaluate_aggregate(spec: AggregateSpec, rows: Mapping[str, np.ndarray]) -> float:
    """Value of ``spec`` over one individual's rows (column name -> values).

    Returns NaN (missing) on an empty selection, except Count which gives 0.
    """
    n_rows = len(next(iter(rows.values()))) if rows else 0
    keep = np.ones(n_rows, dtype=bool)
    if spec.selector is not None:
        col, direction, thr = spec.selector
        keep &= _passes(np.asarray(rows[col], dtype=float), direction, thr)
    if spec.function == "Count":
        return float(keep.sum())
    vals = np.asarray(rows[spec.operand], dtype=float)[keep]
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return math.nan
    return float({
        "Min": np.min, "Max": np.max, "Mean": np.mean, "Median": np.median,
        "StdDev": np.std, "Sum": np.sum,
    }[spec.function](vals))


@dataclass(frozen=True, eq=False)
class FlatTable:
    keys: tuple[str, ...]
    labels: np.ndarray
    specs: tuple[AggregateSpec, ...]
    values: np.ndarray  # (N, Q), NaN = missing

    @property
    def names(self) -> list[str]:
        return [s.display_name for s in self.specs]

    @property
    def n(self) -> int:
        return len(self.keys)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, columns: Sequence[int]) -> "FlatTable":
        columns = list(columns)
        return FlatTable(self.keys, self.labels, tuple(self.specs[j] for j in columns),
                         self.values[:, columns])

    def rows(self, index: Sequence[int]) -> "FlatTable":
        index = np.asarray(index, dtype=np.int64)
        return FlatTable(tuple(self.keys[i] for i in index), self.labels[index], self.specs,
                         self.values[index])


_REDUCERS = {
    "Min": np.nanmin, "Max": np.nanmax, "Mean": np.nanmean, "Median": np.nanmedian,
    "StdDev": np.nanstd, "Sum": np.nansum,
}


def flatten(ds: RelationalDataset, specs: Sequence[AggregateSpec]) -> FlatTable:
    if not specs:
        raise ParameterError("flatten needs at least one aggregate spec")
    cube, present = ds.padded()
    col = {c: j for j, c in enumerate(ds.numeric_names)}
    out = np.empty((ds.n, len(specs)))
    for q, spec in enumerate(specs):
        keep = present
        if spec.selector is not None:
            name, direction, thr = spec.selector
            keep = present & _passes(cube[:, :, col[name]], direction, thr)
        if spec.function == "Count":
            out[:, q] = keep.sum(axis=1)
            continue
        vals = np.where(keep, cube[:, :, col[spec.operand]], np.nan)
        # rows with nothing selected are filled, reduced, then reset (no nan-reducer warnings)
        empty = np.isnan(vals).all(axis=1)
        vals[empty] = 0.0
        res = _REDUCERS[spec.function](vals, axis=1)
        res[empty] = np.nan
        out[:, q] = res
    return FlatTable(tuple(ds.keys), ds.labels.copy(), tuple(specs), out)


def write_flat_table(flat: FlatTable, path, target_name: str = "Target") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["Key", target_name, *flat.names])
        for i, key in enumerate(flat.keys):
            w.writerow([key, flat.labels[i], *("" if math.isnan(v) else repr(float(v)) for v in flat.values[i])])


def write_specs(specs: Sequence[AggregateSpec], path) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_json() for s in specs], fh, indent=1)
        fh.write("\n")


def read_specs(path) -> list[AggregateSpec]:
    with open(path) as fh:
        return [AggregateSpec.from_json(d) for d in json.load(fh)]
