"""Supervised MODL discretization (numeric) and value grouping (categorical).

Costs are coding lengths in nats. A variable is informative when its best
model, plus the cost of constructing the variable, encodes the labels in
fewer nats than the single-part null model.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .aggregates import FlatTable, fmt_number, midpoint
from .errors import ParameterError


def encode_labels(labels, classes: Sequence[str] | int | None = None) -> tuple[np.ndarray, tuple]:
    """Class codes 0..C-1 and the class tuple.

    An integer ``classes`` means the labels are already codes in ``range(classes)``.
    """
    if isinstance(classes, (int, np.integer)):
        return np.asarray(labels, dtype=np.int64), tuple(range(int(classes)))
    labels = np.asarray(labels).astype(str)
    if classes is None:
        classes = tuple(sorted(set(labels.tolist())))
    index = {c: z for z, c in enumerate(classes)}
    try:
        codes = np.array([index[v] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise ParameterError(f"label {exc.args[0]!r} not among classes {classes}") from None
    return codes, tuple(classes)


def _part_cost(counts, lf) -> float:
    """ln C(n+C-1, C-1) + ln(n! / prod n_z!) for one part."""
    C = len(counts)
    n = int(sum(counts))
    s = 0.0
    for v in counts:
        s += lf[int(v)]
    return (lf[n + C - 1] - lf[C - 1] - lf[n]) + (lf[n] - s)


@dataclass(frozen=True, eq=False)
class IntervalPartition:
    """Half-open intervals ]b_{i-1}, b_i] over the real line, plus an optional missing bucket."""

    boundaries: np.ndarray  # (I - 1,)
    counts: np.ndarray  # (I, C) int
    missing: np.ndarray | None = None  # (C,) int

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "counts", c)
        if self.missing is not None:
            object.__setattr__(self, "missing", np.asarray(self.missing, dtype=np.int64))
        if c.ndim != 2 or len(c) != len(b) + 1:
            raise ParameterError("a partition with I intervals needs I - 1 boundaries")
        if np.any(np.diff(b) <= 0):
            raise ParameterError("partition boundaries must be strictly increasing")

    @property
    def n_intervals(self) -> int:
        return len(self.counts)

    @property
    def n_parts(self) -> int:
        return self.n_intervals + (self.missing is not None)

    def part_counts(self) -> np.ndarray:
        """(n_parts, C) counts with the missing bucket, if any, as the last row."""
        if self.missing is None:
            return self.counts
        return np.vstack([self.counts, self.missing[None, :]])

    def part_index(self, x) -> np.ndarray:
        """Part of each value. Missing values go to the missing bucket, or to the
        first interval when the partition has none."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.boundaries, x, side="left")
        miss = np.isnan(x)
        idx[miss] = self.n_intervals if self.missing is not None else 0
        return idx

    def label(self, i: int) -> str:
        if i == self.n_intervals:
            return "Missing"
        lo = "-inf" if i == 0 else fmt_number(self.boundaries[i - 1])
        if i == self.n_intervals - 1:
            return f"]{lo}, +inf["
        return f"]{lo}, {fmt_number(self.boundaries[i])}]"

    def to_json(self) -> dict:
        return {
            "kind": "intervals",
            "boundaries": self.boundaries.tolist(),
            "counts": self.counts.tolist(),
            "missing": None if self.missing is None else self.missing.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ValueGrouping:
    groups: tuple[tuple[str, ...], ...]
    counts: np.ndarray  # (G, C)

    @property
    def n_parts(self) -> int:
        return len(self.groups)

    def part_counts(self) -> np.ndarray:
        return self.counts

    def part_index(self, x) -> np.ndarray:
        lookup = {v: g for g, members in enumerate(self.groups) for v in members}
        # unseen values fall into the largest group
        default = int(np.argmax(self.counts.sum(axis=1)))
        return np.array([lookup.get(MISSING_VALUE if v is None else str(v), default) for v in x],
                        dtype=np.int64)

    def label(self, i: int) -> str:
        return "{" + ", ".join(self.groups[i]) + "}"

    def to_json(self) -> dict:
        return {"kind": "groups", "groups": [list(g) for g in self.groups], "counts": self.counts.tolist()}


MISSING_VALUE = "<missing>"


def partition_from_json(doc: dict):
    if doc["kind"] == "intervals":
        missing = doc.get("missing")
        return IntervalPartition(np.array(doc["boundaries"], dtype=float),
                                 np.array(doc["counts"], dtype=np.int64),
                                 None if missing is None else np.array(missing, dtype=np.int64))
    return ValueGrouping(tuple(tuple(g) for g in doc["groups"]), np.array(doc["counts"], dtype=np.int64))


@dataclass
class VariableEvaluation:
    name: str
    model_cost: float
    null_cost: float
    construction_cost: float
    cg: float
    level: float
    partition: IntervalPartition | ValueGrouping | None = field(default=None, repr=False)

    @property
    def n_parts(self) -> int:
        return self.partition.n_parts if self.partition is not None else 1


def _evaluation(name, model_cost, null_cost, construction_cost, partition) -> VariableEvaluation:
    model_cost, null_cost, construction_cost = float(model_cost), float(null_cost), float(construction_cost)
    cg = (null_cost - model_cost - construction_cost) / null_cost if null_cost > 0 else 0.0
    return VariableEvaluation(name, model_cost, null_cost, construction_cost, cg, max(0.0, cg), partition)


def modl_cost(partition: IntervalPartition, N: int | None = None, C: int | None = None) -> float:
    """Coding length of a discretization and of the labels given it.

    ln N + ln C(N_obs + I - 1, I - 1) + sum over parts of
    [ln C(n_i + C - 1, C - 1) + ln(n_i! / prod_z n_iz!)], where N_obs counts
    the non-missing instances; the missing bucket adds its own part terms
    but no boundary.
    """
    counts = partition.counts
    if np.any(counts.sum(axis=1) == 0) or (partition.missing is not None and partition.missing.sum() == 0):
        raise ParameterError("partition has an empty part")
    n_obs = int(counts.sum())
    total = n_obs + (int(partition.missing.sum()) if partition.missing is not None else 0)
    N = total if N is None else N
    C = counts.shape[1] if C is None else C
    if C != counts.shape[1] or N != total:
        raise ParameterError("N and C must agree with the partition counts")
    lf = kernels.log_factorial_table(2 * N + C)
    starts = np.arange(len(counts))
    cost = kernels.backend.partition_cost(np.ascontiguousarray(counts), starts, N, n_obs, lf)
    if partition.missing is not None:
        cost += _part_cost(partition.missing, lf)
    return float(cost)


def _null_cost(class_counts: np.ndarray, lf) -> float:
    n = int(class_counts.sum())
    return math.log(n) + _part_cost(class_counts, lf)


def _blocks(values: np.ndarray, y: np.ndarray, C: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Class counts per elementary block of sorted values.

    Distinct values form the initial blocks; consecutive blocks that are pure
    in the same class are fused, as no optimal cut separates them. Returns
    (counts, lowest value per block, highest value per block).
    """
    u, inv = np.unique(values, return_inverse=True)
    counts = np.bincount(inv * C + y, minlength=len(u) * C).reshape(len(u), C)
    nonzero = counts > 0
    pure = nonzero.sum(axis=1) == 1
    cls = np.where(pure, counts.argmax(axis=1), -1)
    fuse = np.zeros(len(u), dtype=bool)
    fuse[1:] = pure[1:] & pure[:-1] & (cls[1:] == cls[:-1])
    block_id = np.cumsum(~fuse) - 1
    n_blocks = block_id[-1] + 1
    out = np.zeros((n_blocks, C), dtype=np.int64)
    np.add.at(out, block_id, counts)
    starts = np.flatnonzero(~fuse)
    ends = np.append(starts[1:], len(u)) - 1
    return out, u[starts], u[ends]


def optimize_discretization(values, labels, construction_cost: float = 0.0, classes=None,
                            name: str = "", exact_limit: int | None = None
                            ) -> tuple[IntervalPartition, VariableEvaluation]:
    values = np.asarray(values, dtype=float)
    y, classes = encode_labels(labels, classes)
    C = len(classes)
    N = len(values)
    if N < 1:
        raise ParameterError("need at least one instance")
    lf = kernels.log_factorial_table(2 * N + C)
    class_counts = np.bincount(y, minlength=C)
    null_cost = _null_cost(class_counts, lf)
    null = IntervalPartition(np.zeros(0), class_counts[None, :])

    obs = ~np.isnan(values)
    n_obs = int(obs.sum())
    if n_obs == 0:
        return null, _evaluation(name, null_cost, null_cost, construction_cost, null)

    counts, lo, hi = _blocks(values[obs], y[obs], C)
    limit = kernels.EXACT_LIMIT if exact_limit is None else exact_limit
    starts, cost = kernels.backend.optimize_partition(counts, N, n_obs, limit, lf)
    part = np.add.reduceat(counts, starts, axis=0)
    boundaries = np.array([midpoint(hi[s - 1], lo[s]) for s in starts[1:]])
    missing = None
    if n_obs < N:
        missing = np.bincount(y[~obs], minlength=C)
        cost += _part_cost(missing, lf)
    if null_cost <= cost:
        return null, _evaluation(name, null_cost, null_cost, construction_cost, null)
    partition = IntervalPartition(boundaries, part, missing)
    return partition, _evaluation(name, cost, null_cost, construction_cost, partition)


def grouping_cost(group_counts: np.ndarray, n_values: int) -> float:
    """ln V + V ln G + sum over groups of the per-part terms."""
    G, C = group_counts.shape
    lf = kernels.log_factorial_table(int(group_counts.sum()) + C)
    cost = math.log(n_values) + n_values * math.log(G)
    for g in range(G):
        cost += _part_cost(group_counts[g], lf)
    return cost


def optimize_grouping(values, labels, construction_cost: float = 0.0, classes=None,
                      name: str = "") -> tuple[ValueGrouping, VariableEvaluation]:
    """Greedy bottom-up merging of categorical values into groups.

    Missing cells are treated as one more value. Merges proceed down to a
    single group and the cheapest level is kept.
    """
    y, classes = encode_labels(labels, classes)
    C = len(classes)
    vals = [MISSING_VALUE if v is None else str(v) for v in values]
    if not vals:
        raise ParameterError("need at least one instance")
    distinct = sorted(set(vals))
    V = len(distinct)
    pos = {v: i for i, v in enumerate(distinct)}
    counts = np.zeros((V, C), dtype=np.int64)
    np.add.at(counts, ([pos[v] for v in vals], y), 1)

    groups = [[v] for v in distinct]
    gcounts = [counts[i].copy() for i in range(V)]
    best = (grouping_cost(np.array(gcounts), V), [list(g) for g in groups], np.array(gcounts))
    while len(groups) > 1:
        G = len(groups)
        best_pair, best_cost = None, math.inf
        for i in range(G):
            for j in range(i + 1, G):
                merged = [gcounts[k] for k in range(G) if k not in (i, j)] + [gcounts[i] + gcounts[j]]
                c = grouping_cost(np.array(merged), V)
                if c < best_cost:
                    best_pair, best_cost = (i, j), c
        i, j = best_pair
        groups[i] = sorted(groups[i] + groups[j])
        gcounts[i] = gcounts[i] + gcounts[j]
        del groups[j], gcounts[j]
        if best_cost <= best[0]:
            best = (best_cost, [list(g) for g in groups], np.array(gcounts))
    cost, groups, gcounts = best
    null_cost = grouping_cost(counts.sum(axis=0, keepdims=True), V)
    grouping = ValueGrouping(tuple(tuple(g) for g in groups), gcounts)
    return grouping, _evaluation(name, cost, null_cost, construction_cost, grouping)


def filter_informative(flat: FlatTable, labels=None, classes=None, threads: int = 1
                       ) -> tuple[FlatTable, list[VariableEvaluation]]:
    """Keep the columns with positive compression gain.

    Evaluations (with their partitions) are returned for every column, in
    column order.
    """
    labels = flat.labels if labels is None else labels
    y, classes = encode_labels(labels, classes)

    def run(j):
        spec = flat.specs[j]
        return optimize_discretization(flat.values[:, j], y, spec.construction_cost,
                                       classes=len(classes), name=spec.display_name)[1]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            evals = list(pool.map(run, range(len(flat.specs))))
    else:
        evals = [run(j) for j in range(len(flat.specs))]
    keep = [j for j, e in enumerate(evals) if e.cg > 0]
    return flat.select(keep), evals


def write_evaluation_report(evals: Sequence[VariableEvaluation], path) -> None:
    order = sorted(evals, key=lambda e: (-e.level, e.name))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["Name", "Level", "Parts", "CG", "ConstructionCost"])
        for e in order:
            w.writerow([e.name, f"{e.level:.6g}", e.n_parts, f"{e.cg:.6g}", f"{e.construction_cost:.6g}"])
