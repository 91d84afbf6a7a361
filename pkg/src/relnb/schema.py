"""Relational data model: a root table of labelled individuals joined
one-to-many to a secondary table of timestamped observations.

Secondary rows are stored sorted by (owner, time) so the rows of an
individual form one contiguous slice ``offsets[i]:offsets[i + 1]``.
Numeric cells use NaN as the in-memory missing marker; categorical cells
use ``None``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParameterError

log = logging.getLogger(__name__)

ROLES = ("key", "target", "time", "numeric", "categorical")
MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "?", "null", "NULL", "None"})


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise DataError(f"duplicate column names: {dup}")
        if self.count("key") != 1:
            raise DataError("a table needs exactly one key column")

    def count(self, role: str) -> int:
        return sum(c.role == role for c in self.columns)

    def names(self, role: str) -> list[str]:
        return [c.name for c in self.columns if c.role == role]

    @property
    def key(self) -> str:
        return self.names("key")[0]

    def to_json(self) -> list[dict]:
        return [{"name": c.name, "role": c.role} for c in self.columns]

    @classmethod
    def from_json(cls, items: Iterable[dict]) -> "TableSchema":
        try:
            return cls(tuple(ColumnSpec(str(it["name"]), str(it["role"])) for it in items))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed column entry in schema: {exc}") from None


def check_schema_pair(root: TableSchema, secondary: TableSchema) -> None:
    if root.count("target") != 1:
        raise DataError("root table needs exactly one target column")
    if secondary.count("time") > 1:
        raise DataError("secondary table has more than one time column")
    if secondary.count("target"):
        raise DataError("secondary table cannot carry a target column")


def load_schema(path: str | Path) -> tuple[TableSchema, TableSchema]:
    """Read a schema file ``{"root": [...], "secondary": [...]}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid schema file: {exc}") from None
    if not isinstance(doc, dict) or "root" not in doc or "secondary" not in doc:
        raise DataError(f"{path}: schema needs 'root' and 'secondary' sections")
    root = TableSchema.from_json(doc["root"])
    secondary = TableSchema.from_json(doc["secondary"])
    check_schema_pair(root, secondary)
    return root, secondary


def save_schema(path: str | Path, root: TableSchema, secondary: TableSchema) -> None:
    doc = {"root": root.to_json(), "secondary": secondary.to_json()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def schema_hash(root: TableSchema, secondary: TableSchema) -> str:
    doc = json.dumps({"root": root.to_json(), "secondary": secondary.to_json()}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class WindowSpec:
    """Prediction horizon ``h`` (hours before onset) and window length ``p``."""

    p: int
    h: float = 0.0

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError(f"window length p must be >= 1, got {self.p}")
        if not self.h >= 0:
            raise ParameterError(f"horizon h must be >= 0, got {self.h}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RelationalDataset:
    root_schema: TableSchema
    secondary_schema: TableSchema
    keys: tuple[str, ...]
    labels: np.ndarray  # (N,) str
    times: np.ndarray  # (M,) float, NaN when there is no time column
    numeric: np.ndarray  # (M, d) float, NaN = missing
    numeric_names: tuple[str, ...]
    categorical: dict = field(default_factory=dict)  # name -> (M,) object
    offsets: np.ndarray = None  # (N + 1,) int64

    @classmethod
    def build(cls, root_schema, secondary_schema, keys, labels, owner, times, numeric,
              numeric_names, categorical=None) -> "RelationalDataset":
        """Assemble a dataset from unsorted secondary rows.

        ``owner`` gives, for every secondary row, the index of its root record.
        """
        keys = tuple(str(k) for k in keys)
        labels = np.asarray(labels, dtype=str)
        owner = np.asarray(owner, dtype=np.int64)
        times = np.asarray(times, dtype=float)
        numeric = np.asarray(numeric, dtype=float).reshape(len(owner), len(numeric_names))
        categorical = dict(categorical or {})
        order = np.lexsort((times, owner))
        counts = np.bincount(owner, minlength=len(keys))
        offsets = np.zeros(len(keys) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(
            root_schema=root_schema,
            secondary_schema=secondary_schema,
            keys=keys,
            labels=_readonly(labels.copy()),
            times=_readonly(times[order]),
            numeric=_readonly(numeric[order]),
            numeric_names=tuple(numeric_names),
            categorical={k: _readonly(np.asarray(v, dtype=object)[order]) for k, v in categorical.items()},
            offsets=_readonly(offsets),
        )

    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def m(self) -> int:
        return len(self.times)

    @property
    def d(self) -> int:
        return len(self.numeric_names)

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels.tolist())))

    @property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.offsets))

    def rows_per_individual(self) -> np.ndarray:
        return np.diff(self.offsets)

    def rows_of(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def has_time(self) -> bool:
        return self.secondary_schema.count("time") == 1

    def subset(self, index: Sequence[int]) -> "RelationalDataset":
        """Dataset restricted to the given root records, in the given order."""
        index = np.asarray(index, dtype=np.int64)
        rows = np.concatenate(
            [np.arange(self.offsets[i], self.offsets[i + 1]) for i in index]
        ) if len(index) else np.zeros(0, dtype=np.int64)
        owner = np.repeat(np.arange(len(index)), np.diff(self.offsets)[index])
        return RelationalDataset.build(
            self.root_schema, self.secondary_schema,
            [self.keys[i] for i in index], self.labels[index], owner,
            self.times[rows], self.numeric[rows], self.numeric_names,
            {k: v[rows] for k, v in self.categorical.items()},
        )

    def with_labels(self, labels) -> "RelationalDataset":
        return RelationalDataset.build(
            self.root_schema, self.secondary_schema, self.keys, labels, self.owner,
            self.times, self.numeric, self.numeric_names, self.categorical,
        )

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Numeric cells as an (N, pmax, d) array plus the (N, pmax) row mask.

        Absent rows are filled with NaN, so they behave like missing cells.
        """
        lengths = self.rows_per_individual()
        pmax = int(lengths.max()) if self.n and self.m else 0
        out = np.full((self.n, max(pmax, 1), self.d), np.nan)
        mask = np.zeros((self.n, max(pmax, 1)), dtype=bool)
        if self.m:
            owner = self.owner
            pos = np.arange(self.m) - self.offsets[owner]
            out[owner, pos] = self.numeric
            mask[owner, pos] = True
        return out, mask


def _detect_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_table(path: Path, schema: TableSchema) -> tuple[list[str], list[list[str]]]:
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open: {exc.strerror}") from None
    with fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: missing header row")
        delim = _detect_delimiter(header_line)
        header = next(csv.reader([header_line], delimiter=delim))
        header = [h.strip() for h in header]
        expected = [c.name for c in schema.columns]
        missing = [n for n in expected if n not in header]
        extra = [h for h in header if h not in expected]
        if missing or extra:
            raise DataError(f"{path}: header does not match schema (missing {missing}, unexpected {extra})")
        rows = []
        for lineno, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [v.strip() for v in row]))
    return header, rows


def _parse_float(text: str, path, lineno, col) -> float:
    if text in MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}, line {lineno}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"{path}, line {lineno}, column {col!r}: non-finite value {text!r}")
    return value


def load_dataset(root_path, secondary_path, schema: tuple[TableSchema, TableSchema]) -> RelationalDataset:
    root_schema, sec_schema = schema
    check_schema_pair(root_schema, sec_schema)
    root_path, secondary_path = Path(root_path), Path(secondary_path)

    header, rows = _read_table(root_path, root_schema)
    ki = header.index(root_schema.key)
    ti = header.index(root_schema.names("target")[0])
    keys, labels, index = [], [], {}
    for lineno, row in rows:
        key, label = row[ki], row[ti]
        if key in MISSING_TOKENS:
            raise DataError(f"{root_path}, line {lineno}, column {root_schema.key!r}: missing key")
        if label in MISSING_TOKENS:
            raise DataError(f"{root_path}, line {lineno}, column {header[ti]!r}: missing class label")
        if key in index:
            raise DataError(f"{root_path}, line {lineno}: duplicate key {key!r}")
        index[key] = len(keys)
        keys.append(key)
        labels.append(label)
    if not keys:
        raise DataError(f"{root_path}: root table is empty")

    header, rows = _read_table(secondary_path, sec_schema)
    ki = header.index(sec_schema.key)
    time_col = sec_schema.names("time")
    ti = header.index(time_col[0]) if time_col else None
    num_names = sec_schema.names("numeric")
    cat_names = sec_schema.names("categorical")
    num_idx = [header.index(n) for n in num_names]
    cat_idx = [header.index(n) for n in cat_names]

    owner, times = [], []
    numeric = np.empty((len(rows), len(num_names)))
    cats = {n: [] for n in cat_names}
    orphans = set()
    for r, (lineno, row) in enumerate(rows):
        key = row[ki]
        if key not in index:
            orphans.add(key)
            continue
        owner.append(index[key])
        if ti is not None:
            t = _parse_float(row[ti], secondary_path, lineno, time_col[0])
            if math.isnan(t):
                raise DataError(f"{secondary_path}, line {lineno}, column {time_col[0]!r}: missing time")
            times.append(t)
        else:
            times.append(math.nan)
        for j, c in enumerate(num_idx):
            numeric[len(owner) - 1, j] = _parse_float(row[c], secondary_path, lineno, num_names[j])
        for name, c in zip(cat_names, cat_idx):
            cats[name].append(None if row[c] in MISSING_TOKENS else row[c])
    if orphans:
        raise DataError(f"{secondary_path}: secondary keys absent from the root table: {sorted(orphans)[:20]}")

    return RelationalDataset.build(
        root_schema, sec_schema, keys, labels, owner, times, numeric[: len(owner)], num_names, cats,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_dataset(ds: RelationalDataset, root_path, secondary_path, schema_path=None) -> None:
    """Write both tables as tab-separated files (and the schema file when given)."""
    root_cols = [c.name for c in ds.root_schema.columns]
    with open(root_path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(root_cols)
        target = ds.root_schema.names("target")[0]
        for key, label in zip(ds.keys, ds.labels):
            w.writerow([key if c == ds.root_schema.key else label if c == target else "" for c in root_cols])
    sec_cols = [c.name for c in ds.secondary_schema.columns]
    owner = ds.owner
    num_pos = {n: j for j, n in enumerate(ds.numeric_names)}
    time_name = (ds.secondary_schema.names("time") or [None])[0]
    with open(secondary_path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(sec_cols)
        for r in range(ds.m):
            out = []
            for c in sec_cols:
                if c == ds.secondary_schema.key:
                    out.append(ds.keys[owner[r]])
                elif c == time_name:
                    out.append(_fmt(float(ds.times[r])))
                elif c in num_pos:
                    out.append(_fmt(float(ds.numeric[r, num_pos[c]])))
                else:
                    out.append(_fmt(ds.categorical[c][r]))
            w.writerow(out)
    if schema_path is not None:
        save_schema(schema_path, ds.root_schema, ds.secondary_schema)


def apply_window(ds: RelationalDataset, w: WindowSpec, strict: bool = False) -> RelationalDataset:
    """Keep, per individual, the ``w.p`` most recent observations at or before ``-w.h``.

    Times are signed hours relative to onset. With ``strict=True`` the cut is
    ``t < -h`` instead of ``t <= -h``. Individuals left without any row are
    dropped from the root table.
    """
    if not isinstance(w, WindowSpec):
        raise ParameterError("apply_window needs a WindowSpec")
    if not ds.has_time():
        raise ParameterError("windowing needs a time column in the secondary table")
    usable = ds.times < -w.h if strict else ds.times <= -w.h
    owner = ds.owner
    keep = np.zeros(ds.m, dtype=bool)
    # rows are time-sorted within an individual: count usable rows from the end
    for i in range(ds.n):
        lo, hi = ds.offsets[i], ds.offsets[i + 1]
        idx = np.flatnonzero(usable[lo:hi])
        keep[lo + idx[-w.p:]] = True
    kept_counts = np.bincount(owner[keep], minlength=ds.n)
    survivors = np.flatnonzero(kept_counts > 0)
    dropped = ds.n - len(survivors)
    if dropped:
        log.info("windowing dropped %d individual(s) with no observation before the horizon", dropped)
    remap = np.full(ds.n, -1, dtype=np.int64)
    remap[survivors] = np.arange(len(survivors))
    return RelationalDataset.build(
        ds.root_schema, ds.secondary_schema,
        [ds.keys[i] for i in survivors], ds.labels[survivors], remap[owner[keep]],
        ds.times[keep], ds.numeric[keep], ds.numeric_names,
        {k: v[keep] for k, v in ds.categorical.items()},
    )


@dataclass
class ValidationReport:
    n: int
    m: int
    missing_rates: dict[str, float]
    flagged: list[str]
    rows_per_individual: np.ndarray
    class_counts: dict[str, int]
    threshold: float
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        rows = self.rows_per_individual
        lines = [
            f"N\t{self.n}",
            f"M\t{self.m}",
            f"rows_per_individual_min\t{int(rows.min()) if rows.size else 0}",
            f"rows_per_individual_max\t{int(rows.max()) if rows.size else 0}",
            f"rows_per_individual_mean\t{float(rows.mean()) if rows.size else 0.0:.6g}",
        ]
        lines += [f"class\t{c}\t{k}" for c, k in self.class_counts.items()]
        for name, rate in self.missing_rates.items():
            flag = "FLAG" if name in self.flagged else "ok"
            lines.append(f"missing\t{name}\t{rate:.6g}\t{flag}")
        lines += [f"warning\t{w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def validate(ds: RelationalDataset, missing_threshold: float = 0.20) -> ValidationReport:
    rates = {}
    for j, name in enumerate(ds.numeric_names):
        rates[name] = float(np.isnan(ds.numeric[:, j]).mean()) if ds.m else 0.0
    for name, col in ds.categorical.items():
        rates[name] = float(np.mean([v is None for v in col])) if ds.m else 0.0
    flagged = [name for name, r in rates.items() if r > missing_threshold]
    classes, counts = np.unique(ds.labels, return_counts=True)
    warnings = []
    if ds.m == 0:
        warnings.append("secondary table is empty")
    if len(classes) < 2:
        warnings.append("fewer than two classes")
    return ValidationReport(
        n=ds.n, m=ds.m, missing_rates=rates, flagged=flagged,
        rows_per_individual=ds.rows_per_individual(),
        class_counts={str(c): int(k) for c, k in zip(classes, counts)},
        threshold=missing_threshold, warnings=warnings,
    )
