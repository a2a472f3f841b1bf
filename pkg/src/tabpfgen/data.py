"""Tabular data model, CSV I/O, standardization, splitting and toy generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from tabpfgen.errors import (
    CsvFormatError,
    EmptyTableError,
    InvalidDatasetError,
    LabelColumnError,
    MissingFileError,
    SplitError,
)

PROVENANCE_COLUMN = "__synthetic__"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map to zero mean and unit population std.

    Columns whose std is exactly zero are flagged in ``constant`` and left
    untouched by both directions of the map.
    """

    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray

    def standardize(self, x):
        x = np.asarray(x, dtype=float)
        out = (x - self.means) / np.where(self.constant, 1.0, self.stds)
        return np.where(self.constant, x, out)

    def destandardize(self, z):
        z = np.asarray(z, dtype=float)
        out = z * np.where(self.constant, 1.0, self.stds) + self.means
        return np.where(self.constant, z, out)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus dense integer labels.

    ``label_names`` keeps the original label strings (index = class id) so
    that exports round-trip. ``standardizer`` is set when ``features`` live in
    standardized space. ``synthetic`` is an optional per-row provenance flag.
    A dataset is ``partial`` when some class id below ``n_classes`` has no
    rows, e.g. a batch of minority-class synthetic rows.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    n_classes: int
    label_names: tuple | None = None
    label_column: str = "label"
    label_position: int | None = None
    standardizer: Standardizer | None = None
    synthetic: np.ndarray | None = None
    partial: bool = False

    def __post_init__(self):
        x = _frozen(self.features, float)
        y = np.asarray(self.labels)
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidDatasetError("labels must be integer class ids")
        y = _frozen(y, np.int64)
        if x.ndim != 2:
            raise InvalidDatasetError(f"features must be 2-D, got shape {x.shape}")
        n, d = x.shape
        if d < 1:
            raise InvalidDatasetError("dataset needs at least one feature")
        if y.shape != (n,):
            raise InvalidDatasetError(f"{y.shape[0]} labels for {n} rows")
        if self.n_classes < 1:
            raise InvalidDatasetError("n_classes must be >= 1")
        if not np.all(np.isfinite(x)):
            r, c = np.argwhere(~np.isfinite(x))[0]
            raise InvalidDatasetError(f"non-finite feature at row {r}, column {c}")
        if n and (y.min() < 0 or y.max() >= self.n_classes):
            raise InvalidDatasetError(f"labels must lie in 0..{self.n_classes - 1}")
        if not self.partial and n and np.unique(y).size != self.n_classes:
            raise InvalidDatasetError("some class ids have no rows; mark the dataset partial")
        if len(self.feature_names) != d:
            raise InvalidDatasetError(f"{len(self.feature_names)} feature names for {d} columns")
        if self.label_names is not None and len(self.label_names) != self.n_classes:
            raise InvalidDatasetError("label_names must have one entry per class")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(self.label_names))
        if self.synthetic is not None:
            s = _frozen(self.synthetic, bool)
            if s.shape != (n,):
                raise InvalidDatasetError("provenance flag must have one entry per row")
            object.__setattr__(self, "synthetic", s)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def with_features(self, features, **changes):
        return replace(self, features=features, **changes)

    def subset(self, rows):
        rows = np.asarray(rows)
        labels = self.labels[rows]
        partial = np.unique(labels).size != self.n_classes
        synthetic = None if self.synthetic is None else self.synthetic[rows]
        return replace(
            self,
            features=self.features[rows],
            labels=labels,
            synthetic=synthetic,
            partial=partial,
        )

    def class_id(self, key):
        """Resolve a user-facing class key (label name or integer id)."""
        key = str(key).strip()
        if self.label_names is not None and key in self.label_names:
            return self.label_names.index(key)
        try:
            k = int(key)
        except ValueError:
            raise InvalidDatasetError(f"unknown class {key!r}") from None
        if not 0 <= k < self.n_classes:
            raise InvalidDatasetError(f"unknown class {key!r}")
        return k


def concat(first: Dataset, *others: Dataset) -> Dataset:
    """Stack datasets row-wise; metadata comes from ``first``."""
    parts = (first,) + others
    for p in others:
        if p.n_features != first.n_features or p.n_classes != first.n_classes:
            raise InvalidDatasetError("cannot concatenate datasets of different shape")
    flags = None
    if any(p.synthetic is not None for p in parts):
        flags = np.concatenate(
            [p.synthetic if p.synthetic is not None else np.zeros(p.n_rows, bool) for p in parts]
        )
    labels = np.concatenate([p.labels for p in parts])
    return replace(
        first,
        features=np.vstack([p.features for p in parts]),
        labels=labels,
        synthetic=flags,
        partial=np.unique(labels).size != first.n_classes,
    )


def empty_like(d: Dataset) -> Dataset:
    return replace(d, features=np.zeros((0, d.n_features)), labels=np.zeros(0, np.int64),
                   synthetic=None if d.synthetic is None else np.zeros(0, bool), partial=True)


# ---------------------------------------------------------------- CSV


MISSING_TOKENS = frozenset({"", "na", "nan", "null", "?"})


def load_csv(path, label_column: str | int = -1) -> Dataset:
    """Read a headered CSV; the label column may be given by name or index.

    Labels are re-encoded to ids ``0..K-1`` in order of first appearance.
    """
    return _read_table(path, label_column, allow_missing=False)[0]


def load_csv_with_missing(path, label_column: str | int = -1):
    """Like :func:`load_csv` but empty/NA/NaN cells become missing.

    Returns ``(dataset, mask)`` where ``mask`` is true at missing cells and
    the dataset holds 0.0 there.
    """
    return _read_table(path, label_column, allow_missing=True)


def _read_table(path, label_column, allow_missing):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyTableError(f"{path}: no header row")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise EmptyTableError(f"{path}: no data rows")
    label_idx = _resolve_column(header, label_column)
    prov_idx = header.index(PROVENANCE_COLUMN) if PROVENANCE_COLUMN in header else None
    feat_idx = [j for j in range(len(header)) if j not in (label_idx, prov_idx)]
    if not feat_idx:
        raise EmptyTableError(f"{path}: no feature columns")

    names: list[str] = []
    codes: dict[str, int] = {}
    labels = np.empty(len(body), dtype=np.int64)
    x = np.empty((len(body), len(feat_idx)))
    missing = np.zeros(x.shape, bool)
    flags = np.zeros(len(body), bool)
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise CsvFormatError(f"{path}: row {line} has {len(row)} cells, expected {len(header)}")
        lab = row[label_idx]
        if lab not in codes:
            codes[lab] = len(names)
            names.append(lab)
        labels[i] = codes[lab]
        if prov_idx is not None:
            flags[i] = row[prov_idx].strip() == "1"
        for jj, j in enumerate(feat_idx):
            cell = row[j]
            if allow_missing and cell.strip().lower() in MISSING_TOKENS:
                missing[i, jj] = True
                x[i, jj] = 0.0
                continue
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise CsvFormatError(
                    f"{path}: row {line}, column {header[j]!r}: cell {cell!r} is not a finite number"
                )
            x[i, jj] = v
    d = Dataset(
        features=x,
        labels=labels,
        feature_names=tuple(header[j] for j in feat_idx),
        n_classes=len(names),
        label_names=tuple(names),
        label_column=header[label_idx],
        label_position=label_idx,
        synthetic=flags if prov_idx is not None else None,
    )
    return d, missing


def _resolve_column(header, label_column):
    if isinstance(label_column, str) and label_column in header:
        return header.index(label_column)
    try:
        idx = int(label_column)
    except (TypeError, ValueError):
        raise LabelColumnError(f"label column {label_column!r} not in header") from None
    if not -len(header) <= idx < len(header):
        raise LabelColumnError(f"label column index {idx} out of range")
    return idx % len(header)


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def save_csv(d: Dataset, path, emit_provenance: bool = False) -> None:
    """Write ``d`` in raw (destandardized) units, floats at 17 significant digits."""
    x = d.features
    if d.standardizer is not None:
        x = d.standardizer.destandardize(x)
    names = d.label_names or tuple(str(k) for k in range(d.n_classes))
    pos = d.n_features if d.label_position is None else min(d.label_position, d.n_features)
    header = list(d.feature_names)
    header.insert(pos, d.label_column)
    if emit_provenance:
        header.append(PROVENANCE_COLUMN)
    flags = d.synthetic if d.synthetic is not None else np.zeros(d.n_rows, bool)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(d.n_rows):
            row = [format_float(v) for v in x[i]]
            row.insert(pos, names[d.labels[i]])
            if emit_provenance:
                row.append("1" if flags[i] else "0")
            w.writerow(row)


# ---------------------------------------------------------------- standardization


def fit_standardizer(d: Dataset | np.ndarray) -> Standardizer:
    x = d.features if isinstance(d, Dataset) else np.asarray(d, dtype=float)
    if x.shape[0] == 0:
        raise EmptyTableError("cannot fit a standardizer on zero rows")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    constant = stds == 0.0
    return Standardizer(
        means=_frozen(np.where(constant, 0.0, means), float),
        stds=_frozen(np.where(constant, 1.0, stds), float),
        constant=_frozen(constant, bool),
    )


def standardize(d: Dataset, s: Standardizer) -> Dataset:
    if d.standardizer is not None:
        raise InvalidDatasetError("dataset is already standardized")
    return d.with_features(s.standardize(d.features), standardizer=s)


def destandardize(d: Dataset) -> Dataset:
    if d.standardizer is None:
        return d
    return d.with_features(d.standardizer.destandardize(d.features), standardizer=None)


# ---------------------------------------------------------------- splitting


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.5
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise SplitError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def split_indices(labels, spec: SplitSpec, n_classes: int | None = None):
    """Return sorted (train_idx, test_idx) index arrays."""
    labels = np.asarray(labels)
    n = labels.size
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        n_test = int(round(spec.test_fraction * n))
        return np.sort(perm[n_test:]), np.sort(perm[:n_test])

    classes = np.unique(labels)
    members = [np.flatnonzero(labels == c) for c in classes]
    sizes = np.array([m.size for m in members])
    if np.any(sizes < 2):
        bad = classes[np.argmax(sizes < 2)]
        raise SplitError(f"class {bad} has a single member; cannot stratify")
    # largest-remainder apportionment keeps every class within one row of exact
    exact = spec.test_fraction * sizes
    n_test = np.floor(exact).astype(int)
    short = int(round(spec.test_fraction * n)) - n_test.sum()
    order = np.lexsort((classes, -(exact - n_test)))
    n_test[order[: max(short, 0)]] += 1
    n_test = np.clip(n_test, 1, sizes - 1)

    train, test = [], []
    for m, k in zip(members, n_test):
        perm = rng.permutation(m)
        test.append(perm[:k])
        train.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(d.labels, spec)
    return d.subset(tr), d.subset(te)


# ---------------------------------------------------------------- generators


def _names(d):
    return tuple(f"x{j}" for j in range(d))


def make_two_moons(n: int = 500, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved unit half-circles.

    Class 0 is the upper half-circle centred at the origin; class 1 is the
    lower half-circle centred at (1, 0.5). Rows are shuffled.
    """
    if n < 2 or noise_std < 0:
        raise InvalidDatasetError("make_two_moons needs n >= 2 and noise_std >= 0")
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)])
    x = np.vstack([outer, inner])
    y = np.concatenate([np.zeros(n_out, np.int64), np.ones(n_in, np.int64)])
    x = x + noise_std * rng.standard_normal(x.shape)
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], _names(2), 2, label_names=("0", "1"))


MOON_CENTERS = np.array([[0.0, 0.0], [1.0, 0.5]])


def make_gaussian_mixture(means, shared_std: float, n_per_class: int, seed: int = 0) -> Dataset:
    """``n_per_class`` i.i.d. rows from N(mean_k, shared_std^2 I) per class, grouped by class."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if shared_std <= 0:
        raise InvalidDatasetError("shared_std must be positive")
    if n_per_class < 1:
        raise EmptyTableError("n_per_class must be >= 1")
    k, d = means.shape
    rng = np.random.default_rng(seed)
    x = np.repeat(means, n_per_class, axis=0) + shared_std * rng.standard_normal((k * n_per_class, d))
    y = np.repeat(np.arange(k), n_per_class)
    return Dataset(x, y, _names(d), k, label_names=tuple(str(i) for i in range(k)))


def make_correlated_gaussian(n: int = 400, rho: float = 0.9, separation: float = 1.0,
                             imbalance: float = 0.5, seed: int = 0) -> Dataset:
    """Two classes sharing the 2-D covariance [[1, rho], [rho, 1]].

    Class means sit at +-separation/2 along the minor axis (1, -1)/sqrt(2), so
    the classes form two parallel ridges. ``imbalance`` is the class-1 share.
    """
    if not -1 < rho < 1:
        raise InvalidDatasetError("rho must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    n1 = int(round(imbalance * n))
    n0 = n - n1
    cov = np.array([[1.0, rho], [rho, 1.0]])
    chol = np.linalg.cholesky(cov)
    axis = np.array([1.0, -1.0]) / np.sqrt(2.0)
    y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    centers = np.where(y[:, None] == 0, -0.5, 0.5) * separation * axis
    x = centers + rng.standard_normal((n, 2)) @ chol.T
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], _names(2), 2, label_names=("0", "1"))


def imbalance_dataset(d: Dataset, keep: Sequence[int], seed: int = 0) -> Dataset:
    """Subsample each class c to ``keep[c]`` rows (seeded, order-preserving)."""
    rng = np.random.default_rng(seed)
    rows = []
    for c, k in enumerate(keep):
        idx = np.flatnonzero(d.labels == c)
        if k > idx.size:
            raise InvalidDatasetError(f"class {c} has only {idx.size} rows")
        rows.append(rng.choice(idx, size=k, replace=False))
    return d.subset(np.sort(np.concatenate(rows)))
