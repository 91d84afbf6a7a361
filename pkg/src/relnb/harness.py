"""Cross-validation of the full pipeline and a planted-signal data generator."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .aggregates import AggregateSpec, FlatTable, flatten, generate_aggregates
from .classifier import SNBModel, evaluate, fit_snb
from .discretize import VariableEvaluation, filter_informative
from .errors import DataError, ParameterError
from .schema import ColumnSpec, RelationalDataset, TableSchema, WindowSpec, apply_window

log = logging.getLogger(__name__)


def stratified_kfold(labels, k: int, seed: int) -> np.ndarray:
    """Fold index of every instance, with class proportions preserved per fold."""
    if k < 2:
        raise ParameterError("at least 2 folds are required")
    labels = np.asarray(labels).astype(str)
    classes, counts = np.unique(labels, return_counts=True)
    small = [f"{c} ({n})" for c, n in zip(classes, counts) if n < k]
    if small:
        raise DataError(f"classes with fewer than {k} instances cannot be stratified: {', '.join(small)}")
    folds = np.empty(len(labels), dtype=np.int64)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    for f, (_, test) in enumerate(splitter.split(np.zeros(len(labels)), labels)):
        folds[test] = f
    return folds


def fold_seed(seed: int, fold: int) -> int:
    """Independent, reproducible seed for one fold."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


@dataclass(frozen=True)
class FittedPipeline:
    specs: tuple[AggregateSpec, ...]
    evaluations: tuple[VariableEvaluation, ...]  # all Q, aligned with specs
    model: SNBModel

    def flatten(self, ds: RelationalDataset) -> FlatTable:
        """Flat table of the model's variables only."""
        specs = [v.spec for v in self.model.variables]
        if not specs:
            return FlatTable(ds.keys, ds.labels, (), np.zeros((ds.n, 0)))
        return flatten(ds, specs)


def fit_pipeline(train: RelationalDataset, q: int, seed: int, allow_selectors: bool = True,
                 lam: float = 1.0, beta: float | None = None, threads: int = 1) -> FittedPipeline:
    """Generate, flatten, filter and fit on ``train`` only."""
    specs = tuple(generate_aggregates(train, q, seed, allow_selectors=allow_selectors))
    flat = flatten(train, specs)
    kept, evals = filter_informative(flat, threads=threads)
    informative = [e for e in evals if e.cg > 0]
    model = fit_snb(kept, informative, seed=seed, lam=lam, beta=beta, metadata={"Q": len(specs)})
    return FittedPipeline(specs, tuple(evals), model)


@dataclass(frozen=True)
class CVConfig:
    folds: int = 10
    seed: int = 0
    q: int = 1000
    window: WindowSpec | None = None
    allow_selectors: bool = True
    lam: float = 1.0
    beta: float | None = None
    threads: int | None = None  # None: one per fold, up to the CPU count

    def __post_init__(self):
        if self.folds < 2:
            raise ParameterError("at least 2 folds are required")
        if self.q < 1:
            raise ParameterError("q must be at least 1")


@dataclass(frozen=True)
class FoldResult:
    fold: int
    Q: int
    R: int
    S: int
    acc_train: float
    auc_train: float
    acc_test: float
    auc_test: float


COLUMNS = ("Fold", "Q", "R", "S", "Acc Train", "Auc train", "Acc Test", "Auc Test")


@dataclass
class MetricsReport:
    folds: list[FoldResult] = field(default_factory=list)

    def check_funnel(self) -> None:
        for f in self.folds:
            if not f.S <= f.R <= f.Q:
                raise AssertionError(f"fold {f.fold}: funnel violated (Q={f.Q}, R={f.R}, S={f.S})")

    def mean(self, attr: str) -> float:
        return float(np.mean([getattr(f, attr) for f in self.folds]))

    def rows(self) -> list[list[str]]:
        out = []
        for f in self.folds:
            out.append([str(f.fold), str(f.Q), str(f.R), str(f.S)] +
                       [f"{v:.6f}" for v in (f.acc_train, f.auc_train, f.acc_test, f.auc_test)])
        out.append(["Mean"] + [f"{self.mean(a):.1f}" for a in ("Q", "R", "S")] +
                   [f"{self.mean(a):.6f}" for a in ("acc_train", "auc_train", "acc_test", "auc_test")])
        return out

    def write(self, path) -> None:
        self.check_funnel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(COLUMNS)
            w.writerows(self.rows())


def _run_fold(ds: RelationalDataset, folds: np.ndarray, f: int, cfg: CVConfig) -> FoldResult:
    train = ds.subset(np.flatnonzero(folds != f))
    test = ds.subset(np.flatnonzero(folds == f))
    fitted = fit_pipeline(train, cfg.q, fold_seed(cfg.seed, f), cfg.allow_selectors, cfg.lam, cfg.beta)
    tr = evaluate(fitted.model, fitted.flatten(train))
    te = evaluate(fitted.model, fitted.flatten(test))
    Q, R, S = fitted.model.funnel
    log.info("fold %d: Q=%d R=%d S=%d test AUC %.4f", f, Q, R, S, te.auc)
    return FoldResult(f, Q, R, S, tr.accuracy, tr.auc, te.accuracy, te.auc)


def run_cv(ds: RelationalDataset, cfg: CVConfig) -> MetricsReport:
    """k-fold cross-validation; every training decision sees the training split only."""
    if cfg.window is not None:
        ds = apply_window(ds, cfg.window)
    folds = stratified_kfold(ds.labels, cfg.folds, cfg.seed)
    threads = cfg.threads or min(cfg.folds, os.cpu_count() or 1)
    if threads == 1:
        results = [_run_fold(ds, folds, f, cfg) for f in range(cfg.folds)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda f: _run_fold(ds, folds, f, cfg), range(cfg.folds)))
    report = MetricsReport(results)
    report.check_funnel()
    return report


@dataclass(frozen=True)
class SynthConfig:
    n: int = 2000
    p: int = 6
    d: int = 10
    shift: float = 2.0
    channel: int = 0
    noise: float = 1.0
    missing: float = 0.0

    def __post_init__(self):
        if self.n < 2 or self.p < 1 or self.d < 1:
            raise ParameterError("need n >= 2, p >= 1 and d >= 1")
        if not 0 <= self.channel < self.d:
            raise ParameterError("planted channel out of range")
        if not 0.0 <= self.missing < 1.0:
            raise ParameterError("missingness rate must lie in [0, 1)")
        if self.shift < 0 or self.noise <= 0:
            raise ParameterError("shift must be >= 0 and noise > 0")


def synthetic_schema(d: int) -> tuple[TableSchema, TableSchema]:
    root = TableSchema((ColumnSpec("Id", "key"), ColumnSpec("Label", "target")))
    sec = TableSchema((ColumnSpec("Id", "key"), ColumnSpec("Time", "time"),
                       *(ColumnSpec(f"ch{c}", "numeric") for c in range(d))))
    return root, sec


def generate_synthetic(cfg: SynthConfig, seed: int) -> RelationalDataset:
    """Balanced two-class logs of Gaussian noise channels.

    For positives, the lowest reading of the planted channel in each window is
    pushed down by ``shift``, so its windowed minimum separates the classes.
    Times run from ``-p`` to ``-1``.
    """
    rng = np.random.default_rng(seed)
    n, p, d = cfg.n, cfg.p, cfg.d
    y = np.zeros(n, dtype=int)
    y[: n // 2] = 1
    y = rng.permutation(y)
    cube = rng.normal(scale=cfg.noise, size=(n, p, d))
    pos = np.flatnonzero(y == 1)
    low = np.argmin(cube[pos, :, cfg.channel], axis=1)
    cube[pos, low, cfg.channel] -= cfg.shift
    values = cube.reshape(n * p, d)
    if cfg.missing > 0:
        values[rng.random(values.shape) < cfg.missing] = np.nan
    root, sec = synthetic_schema(d)
    width = len(str(n))
    keys = [f"id{i:0{width}d}" for i in range(n)]
    owner = np.repeat(np.arange(n), p)
    times = np.tile(np.arange(-p, 0, dtype=float), n)
    return RelationalDataset.build(root, sec, keys, y.astype(str), owner, times, values,
                                   tuple(f"ch{c}" for c in range(d)))


def shuffle_labels(ds: RelationalDataset, seed: int) -> RelationalDataset:
    """Same logs with the labels permuted at random (a no-signal control)."""
    return ds.with_labels(np.random.default_rng(seed).permutation(ds.labels))
