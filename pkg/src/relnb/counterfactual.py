"""Greedy counterfactual trajectories in flat (aggregate) space.

At each step every unused alterable variable is tried at one representative
value per interval; the move that lowers the initial class posterior the most
is committed, as long as it lowers it strictly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .classifier import SNBModel, predict_proba
from .discretize import IntervalPartition
from .errors import ParameterError


@dataclass(frozen=True)
class AlterabilityConfig:
    alterable: frozenset[str] | None = None  # None: every selected variable
    max_steps: int = 10
    stop_threshold: float = 0.5
    target_class: str | None = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ParameterError("max_steps must be at least 1")
        if self.alterable is not None:
            object.__setattr__(self, "alterable", frozenset(self.alterable))


@dataclass(frozen=True)
class TrajectoryStep:
    variable: str
    old: float
    new: float
    posterior: float


@dataclass(frozen=True)
class CounterfactualTrajectory:
    key: str
    initial_class: str
    initial_posterior: float
    steps: tuple[TrajectoryStep, ...]
    outcome: str  # "flipped" or "exhausted"

    @property
    def final_posterior(self) -> float:
        return self.steps[-1].posterior if self.steps else self.initial_posterior

    def to_json(self) -> dict:
        return {
            "key": self.key,
            "initial_class": self.initial_class,
            "initial_posterior": self.initial_posterior,
            "steps": [{"variable": s.variable, "old": _json_float(s.old), "new": s.new,
                       "posterior": s.posterior} for s in self.steps],
            "outcome": self.outcome,
        }


def _json_float(x: float):
    return None if np.isnan(x) else float(x)


def candidate_values(model: SNBModel, variable: int | str) -> list[float]:
    """One representative value per interval of a numeric variable.

    Bounded intervals use their midpoint; the outer ones sit one interquartile
    range beyond their finite bound. The missing bucket gets no candidate.
    """
    j = model.names.index(variable) if isinstance(variable, str) else variable
    v = model.variables[j]
    part = v.partition
    if not isinstance(part, IntervalPartition) or part.n_intervals < 2:
        return []
    b = part.boundaries
    spread = v.iqr if v.iqr > 0 else 1.0
    inner = [(b[i - 1] + b[i]) / 2.0 for i in range(1, len(b))]
    return [float(b[0] - spread)] + [float(x) for x in inner] + [float(b[-1] + spread)]


def _movable(model: SNBModel, config: AlterabilityConfig) -> list[int]:
    if config.alterable is not None:
        unknown = sorted(config.alterable - set(model.names))
        if unknown:
            raise ParameterError(f"alterable variables not in the model: {unknown[:5]}")
    return [j for j in model.selected
            if config.alterable is None or model.variables[j].name in config.alterable]


def find_trajectory(model: SNBModel, row, key: str = "", config: AlterabilityConfig | None = None
                    ) -> CounterfactualTrajectory:
    """Greedy sequence of single-variable changes lowering the initial class posterior."""
    config = config or AlterabilityConfig()
    x = model.matrix(np.asarray(row, dtype=float))[0].copy()
    post = predict_proba(model, x)[0]
    z = int(np.argmax(post))
    current = float(post[z])
    if config.target_class is not None and model.classes[z] == str(config.target_class):
        return CounterfactualTrajectory(key, model.classes[z], current, (), "flipped")

    pool = {j: candidate_values(model, j) for j in _movable(model, config)}
    steps = []
    while len(steps) < config.max_steps and current >= config.stop_threshold:
        rows, moves = [], []
        for j, values in pool.items():
            v = model.variables[j]
            old_part = int(v.parts(x[j:j + 1])[0])
            for c in values:
                new_part = int(v.parts(np.array([c]))[0])
                if new_part == old_part:
                    continue
                trial = x.copy()
                trial[j] = c
                rows.append(trial)
                moves.append((j, c, abs(new_part - old_part)))
        if not rows:
            break
        trial_post = predict_proba(model, np.array(rows))[:, z]
        best = min(range(len(moves)), key=lambda m: (trial_post[m], moves[m][2], model.names[moves[m][0]],
                                                      moves[m][1]))
        if not trial_post[best] < current:
            break
        j, c, _ = moves[best]
        steps.append(TrajectoryStep(model.names[j], float(x[j]), c, float(trial_post[best])))
        x[j] = c
        current = float(trial_post[best])
        del pool[j]
    outcome = "flipped" if current < config.stop_threshold else "exhausted"
    return CounterfactualTrajectory(key, model.classes[z], float(post[z]), tuple(steps), outcome)


def apply_trajectory(model: SNBModel, row, trajectory: CounterfactualTrajectory) -> np.ndarray:
    """The row after every committed change."""
    x = model.matrix(np.asarray(row, dtype=float))[0].copy()
    for s in trajectory.steps:
        x[model.names.index(s.variable)] = s.new
    return x


def find_all(model: SNBModel, X: np.ndarray, keys: Sequence[str], config: AlterabilityConfig | None = None
             ) -> list[CounterfactualTrajectory]:
    X = model.matrix(X)
    return [find_trajectory(model, X[i], str(keys[i]), config) for i in range(len(X))]


def write_trajectories(trajectories: Iterable[CounterfactualTrajectory], path) -> None:
    """One JSON object per line."""
    with open(path, "w") as fh:
        for t in trajectories:
            fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def read_alterable(path) -> frozenset[str]:
    """Variable names, one per line; blank lines and ``#`` comments are ignored."""
    with open(path) as fh:
        names = [line.strip() for line in fh]
    return frozenset(n for n in names if n and not n.startswith("#"))
