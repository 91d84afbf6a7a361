"""Selective (fractional) naive Bayes over discretized variables.

Each variable j contributes ``W_j * ln P(part_j(x) | z)`` to the class-z score,
with ``W_j`` in [0, 1]. Weights are chosen by a regularized likelihood search
over a halving grid of increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .aggregates import AggregateSpec, FlatTable
from .discretize import VariableEvaluation, encode_labels
from .errors import DataError, ParameterError

SMOOTHING = 0.5
INCREMENTS = tuple(2.0 ** -k for k in range(7))  # 1 .. 1/64
MIN_GAIN = 1e-9


@dataclass(frozen=True, eq=False)
class ModelVariable:
    """One discretized input: its partition, smoothed conditionals and weight."""

    name: str
    partition: object
    probs: np.ndarray  # (n_parts, C), columns sum to 1
    weight: float = 0.0
    spec: AggregateSpec | None = None
    construction_cost: float = 0.0
    level: float = 0.0
    iqr: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "log_probs", np.log(p))
        if not 0.0 <= self.weight <= 1.0:
            raise ParameterError(f"weight of {self.name} outside [0, 1]: {self.weight}")

    def parts(self, values) -> np.ndarray:
        return self.partition.part_index(values)


@dataclass(frozen=True)
class Prediction:
    posterior: np.ndarray  # (C,)
    predicted: str
    log_scores: np.ndarray  # (C,) log prior + weighted log conditionals


@dataclass(frozen=True, eq=False)
class SNBModel:
    classes: tuple
    priors: np.ndarray
    variables: tuple[ModelVariable, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pr = np.asarray(self.priors, dtype=float)
        object.__setattr__(self, "priors", pr)
        if len(pr) != len(self.classes) or abs(pr.sum() - 1.0) > 1e-12 or np.any(pr <= 0):
            raise ParameterError("priors must be positive and sum to 1 over the classes")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def weights(self) -> np.ndarray:
        return np.array([v.weight for v in self.variables])

    @property
    def selected(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.weight > 0]

    @property
    def funnel(self) -> tuple[int, int, int]:
        """(Q, R, S): generated, informative and selected variable counts."""
        R = len(self.variables)
        return int(self.metadata.get("Q", R)), R, len(self.selected)

    def matrix(self, data) -> np.ndarray:
        """(N, R) values aligned with ``variables``; accepts a FlatTable or an array."""
        if isinstance(data, FlatTable):
            index = {n: q for q, n in enumerate(data.names)}
            missing = [n for n in self.names if n not in index]
            if missing:
                raise DataError(f"flat table lacks model variables: {missing[:5]}")
            return data.values[:, [index[n] for n in self.names]]
        X = np.asarray(data, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.variables):
            raise DataError(f"expected {len(self.variables)} columns, got {X.shape[1]}")
        return X

    def weighted_scores(self, data) -> np.ndarray:
        """(N, C) sum over selected variables of W_j ln P(part | z), priors excluded."""
        X = self.matrix(data)
        S = np.zeros((len(X), len(self.classes)))
        for j in self.selected:
            v = self.variables[j]
            S += v.weight * v.log_probs[v.parts(X[:, j])]
        return S


def _posterior(priors: np.ndarray, S: np.ndarray) -> np.ndarray:
    top = S.max(axis=1, keepdims=True)
    e = priors[None, :] * np.exp(S - top)
    post = e / e.sum(axis=1, keepdims=True)
    # equal scores across classes leave the priors unchanged; avoid a last-ulp renormalization
    post[(S == top).all(axis=1)] = priors
    return post


def predict_proba(model: SNBModel, data) -> np.ndarray:
    """(N, C) posteriors."""
    return _posterior(model.priors, model.weighted_scores(data))


def predict(model: SNBModel, row) -> Prediction:
    """Posterior, argmax class and per-class log scores of one flat row."""
    S = model.weighted_scores(np.asarray(row, dtype=float)[None, :])
    post = _posterior(model.priors, S)[0]
    return Prediction(post, model.classes[int(np.argmax(post))], np.log(model.priors) + S[0])


def _class_codes(labels, classes):
    y, classes = encode_labels(labels, classes)
    counts = np.bincount(y, minlength=len(classes))
    if np.any(counts == 0):
        absent = [classes[z] for z in np.flatnonzero(counts == 0)]
        raise DataError(f"class(es) absent from training labels: {absent}")
    return y, classes, counts


def estimate_conditionals(values: np.ndarray, partitions: Sequence, labels, classes=None
                          ) -> tuple[list[np.ndarray], np.ndarray]:
    """Smoothed conditionals P(part | class) per variable, and class-frequency priors.

    ``P(i|z) = (n_iz + 0.5) / (n_z + 0.5 * n_parts)``.
    """
    y, classes, counts = _class_codes(labels, classes)
    values = np.asarray(values, dtype=float).reshape(len(y), -1)
    C = len(classes)
    tables = []
    for j, part in enumerate(partitions):
        idx = part.part_index(values[:, j])
        n = np.zeros((part.n_parts, C))
        np.add.at(n, (idx, y), 1.0)
        tables.append((n + SMOOTHING) / (counts[None, :] + SMOOTHING * part.n_parts))
    return tables, counts / counts.sum()


def selection_penalty(n_variables: int, costs: np.ndarray, n_rows: int, lam: float = 1.0,
                      beta: float | None = None) -> np.ndarray:
    """Per-variable cost paid when its weight is positive: ``lam * (ln R + beta * cost)``."""
    beta = 1.0 / n_rows if beta is None else beta
    return lam * (math.log(max(n_variables, 1)) + beta * np.asarray(costs, dtype=float))


def selection_score(log_probs: Sequence[np.ndarray], parts: np.ndarray, y: np.ndarray,
                    priors: np.ndarray, weights: np.ndarray, penalty: np.ndarray) -> float:
    """Regularized log-likelihood of the labels under the given weights."""
    L = np.tile(np.log(priors), (len(y), 1))
    for j, w in enumerate(weights):
        if w > 0:
            L += w * log_probs[j][parts[:, j]]
    ll = kernels.backend.class_loglik(np.ascontiguousarray(L), y)
    return ll - float(np.sum(penalty[np.asarray(weights) > 0]))


def train_weights(values: np.ndarray, partitions: Sequence, labels, costs=None, seed: int = 0,
                  classes=None, lam: float = 1.0, beta: float | None = None) -> np.ndarray:
    """Weights in [0, 1] maximizing the regularized log-likelihood.

    For each increment in 1, 1/2, ..., 1/64, forward passes (try ``W_j + delta``)
    and backward passes (try ``W_j - delta``) visit variables in a fresh random
    order until a full forward and backward pass changes nothing.
    """
    y, classes, _ = _class_codes(labels, classes)
    values = np.asarray(values, dtype=float).reshape(len(y), -1)
    R = values.shape[1]
    if R == 0:
        return np.zeros(0)
    tables, priors = estimate_conditionals(values, partitions, y, len(classes))
    costs = np.zeros(R) if costs is None else np.asarray(costs, dtype=float)
    penalty = selection_penalty(R, costs, len(y), lam, beta)
    be = kernels.backend
    contrib = [np.ascontiguousarray(np.log(t)[p.part_index(values[:, j])])
               for j, (t, p) in enumerate(zip(tables, partitions))]
    L = np.ascontiguousarray(np.tile(np.log(priors), (len(y), 1)))
    W = np.zeros(R)
    ll = be.class_loglik(L, y)
    score = ll
    rng = np.random.default_rng(seed)

    def attempt(j, target):
        nonlocal ll, score
        step = target - W[j]
        new_ll = be.class_loglik_shifted(L, contrib[j], step, y)
        new_score = score + (new_ll - ll)
        if W[j] == 0 and target > 0:
            new_score -= penalty[j]
        elif W[j] > 0 and target == 0:
            new_score += penalty[j]
        if new_score > score + MIN_GAIN:
            be.add_scaled(L, contrib[j], step)
            W[j] = target
            ll, score = new_ll, new_score
            return True
        return False

    for delta in INCREMENTS:
        while True:
            changed = False
            for j in rng.permutation(R):
                if W[j] < 1.0:
                    changed |= attempt(j, min(1.0, W[j] + delta))
            for j in rng.permutation(R):
                if W[j] > 0.0:
                    changed |= attempt(j, max(0.0, W[j] - delta))
            if not changed:
                break
    return W


def _iqr(x: np.ndarray) -> float:
    x = x[~np.isnan(x)]
    if len(x) == 0:
        return 1.0
    q1, q3 = np.percentile(x, [25, 75])
    return float(q3 - q1) if q3 > q1 else 1.0


def fit_snb(flat: FlatTable, evaluations: Sequence[VariableEvaluation], seed: int = 0, classes=None,
            lam: float = 1.0, beta: float | None = None, metadata: dict | None = None) -> SNBModel:
    """Conditionals and weights for the informative columns of ``flat``.

    ``evaluations`` are aligned with the columns of ``flat`` and carry the partitions.
    """
    if len(evaluations) != flat.values.shape[1]:
        raise ParameterError("one evaluation per flat column is required")
    y, classes, _ = _class_codes(flat.labels, classes)
    parts = [e.partition for e in evaluations]
    costs = [e.construction_cost for e in evaluations]
    tables, priors = estimate_conditionals(flat.values, parts, y, len(classes))
    W = train_weights(flat.values, parts, y, costs, seed, len(classes), lam, beta)
    variables = tuple(
        ModelVariable(e.name, e.partition, t, float(w), spec, float(e.construction_cost), float(e.level),
                      _iqr(flat.values[:, j]))
        for j, (e, t, w, spec) in enumerate(zip(evaluations, tables, W, flat.specs))
    )
    meta = {"N": int(len(y)), "seed": int(seed), "lambda": float(lam),
            "beta": float(1.0 / len(y) if beta is None else beta)}
    meta.update(metadata or {})
    meta.setdefault("Q", len(variables))
    return SNBModel(tuple(classes), priors, variables, meta)


def rank_auc(scores, positive) -> float:
    """Mann-Whitney AUC with ties counted half; NaN when only one class is present."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average rank (1-based) over each run of tied scores
    _, start, counts = np.unique(sorted_scores, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat(avg, counts)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    auc: float


def positive_class(classes: Sequence) -> int:
    """Index of the class whose posterior is ranked for AUC (the last in sorted order)."""
    return len(classes) - 1


def evaluate(model: SNBModel, flat: FlatTable, labels=None) -> Metrics:
    """Accuracy at the argmax and rank AUC of the positive-class posterior."""
    labels = flat.labels if labels is None else labels
    y, _ = encode_labels(labels, model.classes)
    post = predict_proba(model, flat)
    acc = float(np.mean(np.argmax(post, axis=1) == y))
    z = positive_class(model.classes)
    return Metrics(acc, rank_auc(post[:, z], y == z))
