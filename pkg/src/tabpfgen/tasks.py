"""Downstream uses of a generator: augmentation, replacement, balancing, imputation.

A *generator* is any callable ``generator(train, counts) -> Dataset`` that
returns ``sum(counts.values())`` synthetic rows (flagged synthetic) in the
same feature space as ``train``, with per-class counts as requested.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy.spatial.distance import cdist

from tabpfgen.data import Dataset, Standardizer, _frozen, concat, fit_standardizer
from tabpfgen.energy import EnergyModel
from tabpfgen.errors import ConfigError, ImputationError, InvalidDatasetError, SmoteError
from tabpfgen.metrics import rmse
from tabpfgen.sampler import SgldConfig, generate, run_sgld
from tabpfgen.scorer import make_scorer


def _histogram(d: Dataset):
    return {k: int(c) for k, c in enumerate(d.class_counts()) if c > 0}


def _as_real(d: Dataset) -> Dataset:
    if d.synthetic is not None:
        return d
    return dc_replace(d, synthetic=np.zeros(d.n_rows, bool))


def _synthetic_rows(template: Dataset, x, y) -> Dataset:
    y = np.asarray(y, dtype=np.int64)
    return dc_replace(
        template,
        features=x,
        labels=y,
        synthetic=np.ones(y.size, bool),
        partial=np.unique(y).size != template.n_classes,
    )


# ---------------------------------------------------------------- generators


def tabpfgen_generator(scorer=None, cfg: SgldConfig | None = None, variant="full", swap_weight=1.0):
    def gen(train, counts):
        return generate(train, counts, scorer=scorer, cfg=cfg, variant=variant,
                        swap_weight=swap_weight).dataset
    return gen


def smote_generator(k=5, seed=0):
    def gen(train, counts):
        return smote(train, counts, k=k, seed=seed)
    return gen


def sampling_generator(seed=0):
    def gen(train, counts):
        return sampling(train, counts, seed=seed)
    return gen


def sampling(train: Dataset, counts, seed=0) -> Dataset:
    """Per-class resampling of real rows with replacement."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in sorted(counts):
        if counts[k] == 0:
            continue
        idx = np.flatnonzero(train.labels == k)
        if idx.size == 0:
            raise InvalidDatasetError(f"class {k} has no rows to resample")
        rows.append(idx[rng.integers(idx.size, size=counts[k])])
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    return _synthetic_rows(train, train.features[rows], train.labels[rows])


def smote(train: Dataset, per_class_counts, k=5, seed=0, max_gap=1.0) -> Dataset:
    """SMOTE interpolation between same-class nearest neighbours.

    Each synthetic row is ``x_i + u * (x_j - x_i)`` with ``x_i`` a uniformly
    drawn member of the class, ``x_j`` one of its ``k`` nearest same-class
    neighbours (Euclidean), and ``u ~ U(0, max_gap)``.
    """
    if k < 1:
        raise SmoteError("k must be >= 1")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in sorted(per_class_counts):
        n_new = int(per_class_counts[c])
        if n_new == 0:
            continue
        members = train.features[train.labels == c]
        if members.shape[0] < k + 1:
            raise SmoteError(f"class {c} has {members.shape[0]} rows; SMOTE with k={k} needs {k + 1}")
        dist = cdist(members, members)
        np.fill_diagonal(dist, np.inf)
        neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out = np.empty((n_new, train.n_features))
        for r in range(n_new):
            i = rng.integers(members.shape[0])
            j = neighbours[i, rng.integers(k)]
            u = rng.random() * max_gap
            out[r] = members[i] + u * (members[j] - members[i])
        xs.append(out)
        ys.append(np.full(n_new, c, np.int64))
    if not xs:
        return _synthetic_rows(train, np.zeros((0, train.n_features)), np.zeros(0, np.int64))
    return _synthetic_rows(train, np.vstack(xs), np.concatenate(ys))


# ---------------------------------------------------------------- protocols


def augment(train: Dataset, generator) -> Dataset:
    """Real rows plus an equal number of synthetic rows with the same class ratio."""
    if train.n_rows == 0:
        raise InvalidDatasetError("cannot augment an empty dataset")
    synth = generator(train, _histogram(train))
    return concat(_as_real(train), synth)


def replace(train: Dataset, generator) -> Dataset:
    """Synthetic rows only, with the class histogram of ``train``."""
    if train.n_rows == 0:
        raise InvalidDatasetError("cannot replace an empty dataset")
    return generator(train, _histogram(train))


@dataclass(frozen=True)
class BalanceSpec:
    """``target`` is ``"equalize"`` or an explicit {class_id: final count} mapping."""

    target: object = "equalize"

    def deficits(self, d: Dataset):
        counts = d.class_counts()
        if isinstance(self.target, str):
            if self.target != "equalize":
                raise ConfigError(f"unknown balance target {self.target!r}")
            goal = np.full(d.n_classes, counts.max())
        else:
            goal = counts.copy()
            for c, v in self.target.items():
                goal[int(c)] = int(v)
        if np.any(goal < counts):
            raise ConfigError("balance targets must not be below the current class counts")
        return {k: int(g - c) for k, (g, c) in enumerate(zip(goal, counts)) if g > c}


def balance(train: Dataset, spec: BalanceSpec, generator) -> Dataset:
    if train.n_classes < 2:
        raise InvalidDatasetError("balancing needs at least two classes")
    need = spec.deficits(train)
    if not need:
        return train
    return concat(_as_real(train), generator(train, need))


# ---------------------------------------------------------------- imputation


@dataclass(frozen=True)
class MissingMask:
    mask: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mask, bool)
        if m.ndim != 2:
            raise InvalidDatasetError("mask must be 2-D")
        object.__setattr__(self, "mask", m)

    @property
    def missing_fraction(self):
        return float(self.mask.mean()) if self.mask.size else 0.0

    def check(self, d: Dataset):
        if self.mask.shape != d.features.shape:
            raise InvalidDatasetError(f"mask shape {self.mask.shape} != data shape {d.features.shape}")


def random_mask(shape, missing_fraction, seed=0) -> MissingMask:
    """Mask exactly ``round(p * n * D)`` entries chosen uniformly at random.

    The masked cells are a prefix of one seeded permutation, so masks drawn
    with the same seed are nested across fractions.
    """
    if not 0.0 <= missing_fraction < 1.0:
        raise ConfigError("missing fraction must lie in [0, 1)")
    n_cells = int(np.prod(shape))
    k = int(round(missing_fraction * n_cells))
    rng = np.random.default_rng(seed)
    flat = np.zeros(n_cells, bool)
    flat[rng.permutation(n_cells)[:k]] = True
    return MissingMask(flat.reshape(shape))


def observed_standardizer(x, mask) -> Standardizer:
    """Column statistics over observed entries only."""
    obs = np.where(mask, np.nan, x)
    if np.any(np.all(mask, axis=0)):
        raise ImputationError(f"column {int(np.argmax(np.all(mask, axis=0)))} is entirely missing")
    means = np.nanmean(obs, axis=0)
    stds = np.nanstd(obs, axis=0)
    constant = stds == 0.0
    return Standardizer(_frozen(np.where(constant, 0.0, means), float),
                        _frozen(np.where(constant, 1.0, stds), float),
                        _frozen(constant, bool))


def mean_impute(data: Dataset, mask: MissingMask) -> Dataset:
    """Replace masked entries by the column mean over observed entries."""
    mask.check(data)
    if not mask.mask.any():
        return data
    m = mask.mask
    if np.any(np.all(m, axis=0)):
        raise ImputationError(f"column {int(np.argmax(np.all(m, axis=0)))} is entirely missing")
    means = np.nanmean(np.where(m, np.nan, data.features), axis=0)
    return data.with_features(np.where(m, means, data.features))


def imputation_rmse(completed: Dataset, truth: Dataset, mask: MissingMask) -> float:
    """RMSE over masked entries, in the space standardized by ``truth``'s column statistics."""
    s = fit_standardizer(truth)
    a = s.standardize(completed.features)[mask.mask]
    b = s.standardize(truth.features)[mask.mask]
    return rmse(a, b)


def impute(data: Dataset, mask: MissingMask, scorer=None, cfg: SgldConfig | None = None,
           variant="full", swap_weight=1.0, ground_truth: Dataset | None = None):
    """Projected-Langevin imputation conditioned on the known labels.

    Rows with any missing entry form the synthetic batch; fully observed
    rows are the context. Missing entries start at the column mean and
    observed entries are reset after every step. Returns the completed
    table and the RMSE against ``ground_truth`` (None when not supplied).
    Values found in ``data`` at masked positions are never read.
    """
    mask.check(data)
    cfg = cfg or SgldConfig()
    m = mask.mask
    if not m.any():
        out = data
    else:
        st = observed_standardizer(data.features, m)
        z = np.where(m, 0.0, st.standardize(np.where(m, 0.0, data.features)))
        # exactly zero in standardized space is the observed column mean
        z[m] = 0.0
        incomplete = m.any(axis=1)
        ctx_rows = ~incomplete
        synth_y = data.labels[incomplete]
        ctx_y = data.labels[ctx_rows]
        for c in np.unique(synth_y):
            if not np.any(ctx_y == c):
                raise ImputationError(f"class {int(c)} has no fully observed rows to use as context")
        ctx = Dataset(z[ctx_rows], ctx_y, data.feature_names, data.n_classes,
                      standardizer=st, partial=True)
        if scorer is None or isinstance(scorer, dict):
            scorer = make_scorer(**(scorer or {}), context=ctx.features)
        model = EnergyModel(scorer, ctx.features, ctx.labels, data.n_classes,
                            variant=variant, swap_weight=swap_weight)
        res = run_sgld(model, ctx, synth_y, cfg, x_init=z[incomplete],
                       fixed_mask=~m[incomplete], destandardize=False)
        filled = z.copy()
        filled[incomplete] = res.x_synth
        raw = st.destandardize(filled)
        out = data.with_features(np.where(m, raw, data.features))
    err = None
    if ground_truth is not None:
        err = imputation_rmse(out, ground_truth, mask)
    return out, err
