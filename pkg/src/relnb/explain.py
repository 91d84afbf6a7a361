"""Exact Shapley attribution for the weighted naive Bayes.

The explained quantity is the log-odds of class z against a reference class z0.
It is additive over variables, so with absent variables replaced by their
training-mean contribution the Shapley value of variable j is its own centered
term ``W_j * (ln P(part_j(x)|z) / P(part_j(x)|z0) - B_j)``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregates import FlatTable, fmt_number
from .classifier import SNBModel, positive_class, predict_proba
from .errors import ParameterError


def class_index(model: SNBModel, z) -> int:
    if isinstance(z, (int, np.integer)):
        if not 0 <= z < len(model.classes):
            raise ParameterError(f"class index {z} out of range")
        return int(z)
    try:
        return model.classes.index(str(z))
    except ValueError:
        raise ParameterError(f"unknown class {z!r}; classes are {model.classes}") from None


def reference_class(model: SNBModel, z: int) -> int:
    """The other class when binary; otherwise the most frequent class other than z."""
    C = len(model.classes)
    if C == 2:
        return 1 - z
    order = sorted((z0 for z0 in range(C) if z0 != z), key=lambda z0: (-model.priors[z0], z0))
    return order[0]


def _pair(model, z, z0):
    z = class_index(model, positive_class(model.classes) if z is None else z)
    z0 = reference_class(model, z) if z0 is None else class_index(model, z0)
    if z == z0:
        raise ParameterError("the explained class and the reference class must differ")
    return z, z0


def log_ratios(model: SNBModel, data, z: int, z0: int) -> np.ndarray:
    """(N, R) unweighted ``ln P(part|z) - ln P(part|z0)`` per variable."""
    X = model.matrix(data)
    out = np.zeros(X.shape)
    for j, v in enumerate(model.variables):
        lp = v.log_probs[v.parts(X[:, j])]
        out[:, j] = lp[:, z] - lp[:, z0]
    return out


def shapley_baseline(model: SNBModel, train, z=None, z0=None) -> np.ndarray:
    """B_j: training-set mean of each variable's log-ratio."""
    z, z0 = _pair(model, z, z0)
    return log_ratios(model, train, z, z0).mean(axis=0)


def shapley_local(model: SNBModel, data, baseline: np.ndarray, z=None, z0=None) -> np.ndarray:
    """(N, R) Shapley values of every variable for every row of ``data``."""
    z, z0 = _pair(model, z, z0)
    return model.weights[None, :] * (log_ratios(model, data, z, z0) - baseline[None, :])


def log_odds(model: SNBModel, data, z=None, z0=None) -> np.ndarray:
    """``ln P(z|x) - ln P(z0|x)`` from the normalized posterior."""
    z, z0 = _pair(model, z, z0)
    post = predict_proba(model, data)
    return np.log(post[:, z]) - np.log(post[:, z0])


@dataclass(frozen=True)
class GlobalImportance:
    names: tuple[str, ...]
    importance: np.ndarray

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda j: (-self.importance[j], self.names[j]))
        return [(self.names[j], float(self.importance[j])) for j in order]


def shapley_global(model: SNBModel, train, z=None, z0=None) -> GlobalImportance:
    """Mean absolute local Shapley value over the training rows."""
    base = shapley_baseline(model, train, z, z0)
    phi = shapley_local(model, train, base, z, z0)
    return GlobalImportance(tuple(model.names), np.abs(phi).mean(axis=0))


@dataclass(frozen=True)
class ShapleyRecord:
    key: str
    probability: float
    triplets: tuple[tuple[str, str, float], ...]  # (variable, part label, value)


def report_top_k(model: SNBModel, flat: FlatTable, k: int, baseline: np.ndarray, z=None, z0=None
                 ) -> list[ShapleyRecord]:
    """Top-k variables by Shapley value per row, rows sorted by posterior of z descending."""
    if k < 1:
        raise ParameterError("k must be at least 1")
    z, z0 = _pair(model, z, z0)
    selected = model.selected
    if k > len(selected):
        warnings.warn(f"top-k {k} exceeds the {len(selected)} selected variables; using {len(selected)}",
                      stacklevel=2)
        k = len(selected)
    X = model.matrix(flat)
    phi = shapley_local(model, X, baseline, z, z0)
    post = predict_proba(model, X)[:, z]
    records = []
    for i in range(len(X)):
        ranked = sorted(selected, key=lambda j: (-phi[i, j], model.names[j]))[:k]
        triplets = tuple(
            (model.names[j], model.variables[j].partition.label(int(model.variables[j].parts(X[i:i + 1, j])[0])),
             float(phi[i, j]))
            for j in ranked
        )
        records.append(ShapleyRecord(str(flat.keys[i]), float(post[i]), triplets))
    order = sorted(range(len(records)), key=lambda i: (-records[i].probability, records[i].key))
    return [records[i] for i in order]


def write_top_k(records: Sequence[ShapleyRecord], path, class_label: str, k: int | None = None) -> None:
    """Delimited report: ProbTarget, then (variable, part, value) triplets, then Key."""
    k = max((len(r.triplets) for r in records), default=0) if k is None else k
    header = [f"ProbTarget{class_label}"]
    for t in range(1, k + 1):
        header += [f"ShapleyVariable_{t}", f"ShapleyPart_{t}", f"ShapleyValue_{t}"]
    header.append("Key")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [fmt_number(r.probability)]
            for name, part, value in r.triplets:
                row += [name, part, fmt_number(value)]
            row += [""] * (3 * (k - len(r.triplets)))
            w.writerow(row + [r.key])


def write_full_matrix(model: SNBModel, flat: FlatTable, train, path) -> None:
    """Long-format export of every (row, variable, class) Shapley value.

    Each class is explained against its own reference class.
    """
    X = model.matrix(flat)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["Key", "Class", "Reference", "Variable", "Part", "Value"])
        blocks = []
        for z in range(len(model.classes)):
            z0 = reference_class(model, z)
            base = shapley_baseline(model, train, z, z0)
            blocks.append((z, z0, shapley_local(model, X, base, z, z0)))
        parts = [v.parts(X[:, j]) for j, v in enumerate(model.variables)]
        for i in range(len(X)):
            for z, z0, phi in blocks:
                for j, v in enumerate(model.variables):
                    w.writerow([flat.keys[i], model.classes[z], model.classes[z0], v.name,
                                v.partition.label(int(parts[j][i])), fmt_number(phi[i, j])])
