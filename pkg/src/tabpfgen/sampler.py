"""SGLD sampling of synthetic rows from a classifier-induced energy.

Update rule, applied to the standardized batch for ``eta`` steps::

    x <- x - alpha * dE(x | y)/dx + sigma * N(0, I)

The batch is initialized from class-matched training rows plus small
Gaussian noise. After every ``auc_stride`` steps (and after the last step)
the current batch is used as the in-context training set of the frozen
scorer, the real training rows are classified, and the macro AUC is
recorded. The batch with the highest AUC is returned.

Randomness: row ``r`` owns its own generator, seeded from
``SeedSequence(seed, spawn_key=(row_offset + r,))``. Each row draws, in
order, the index of its source training row, its D initialization noise
values, and then D noise values per step. A batch can therefore be split
into pieces (with matching ``row_offset``) without changing any row's
random numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from tabpfgen.data import Dataset, fit_standardizer, standardize
from tabpfgen.energy import EnergyModel, energy_and_grad
from tabpfgen.errors import ClassAbsentError, ConfigError, DivergenceError, MetricError
from tabpfgen.metrics import auc
from tabpfgen.scorer import make_scorer, softmax

_NOISE_BLOCK = 256


@dataclass(frozen=True)
class SgldConfig:
    alpha: float = 0.01
    sigma: float = 0.01
    eta: int = 200
    init_noise_std: float = 0.01
    auc_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "sigma", "init_noise_std"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"sgld.{name} must be finite")
        if not self.alpha > 0:
            raise ConfigError("sgld.alpha must be > 0")
        if self.sigma < 0 or self.init_noise_std < 0:
            raise ConfigError("sgld.sigma and sgld.init_noise_std must be >= 0")
        if int(self.eta) != self.eta or self.eta < 1:
            raise ConfigError("sgld.eta must be an integer >= 1")
        if int(self.auc_stride) != self.auc_stride or self.auc_stride < 1:
            raise ConfigError("sgld.auc_stride must be an integer >= 1")


@dataclass
class SgldTrace:
    steps: list = field(default_factory=list)
    auc: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    best_step: int = 0
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["auc"] = [None if math.isnan(a) else a for a in self.auc]
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class SynthResult:
    x_synth: np.ndarray
    y_synth: np.ndarray
    trace: SgldTrace
    dataset: Dataset | None = None


def row_streams(seed, m, row_offset=0):
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(row_offset + r,)))
        for r in range(m)
    ]


def _class_rows(train, y_synth):
    members = {}
    for k in np.unique(y_synth):
        idx = np.flatnonzero(train.labels == k)
        if idx.size == 0:
            raise ClassAbsentError(f"class {k} requested but absent from the training data")
        members[int(k)] = idx
    return members


def _init_from_streams(train, y_synth, noise_std, streams, active):
    members = _class_rows(train, y_synth)
    x0 = np.empty((y_synth.size, train.n_features))
    for r, (k, rng) in enumerate(zip(y_synth, streams)):
        idx = members[int(k)]
        src = idx[rng.integers(idx.size)]
        noise = rng.standard_normal(train.n_features)
        x0[r] = train.features[src] + noise_std * noise * active
    return x0


def init_synth(train: Dataset, y_synth, cfg: SgldConfig, row_offset=0):
    """Class-matched noisy copies of training rows (standardized space)."""
    y_synth = np.asarray(y_synth, dtype=np.int64)
    streams = row_streams(cfg.seed, y_synth.size, row_offset)
    return _init_from_streams(train, y_synth, cfg.init_noise_std, streams, _active_columns(train))


def _active_columns(train):
    if train.standardizer is None:
        return np.ones(train.n_features)
    return (~train.standardizer.constant).astype(float)


def _monitor_context(train, x, y_synth):
    present = np.unique(y_synth)
    missing = ~np.isin(train.labels, present)
    if not missing.any():
        return x, y_synth
    return (np.vstack([x, train.features[missing]]),
            np.concatenate([y_synth, train.labels[missing]]))


def monitor_auc(scorer, train: Dataset, x, y_synth) -> float:
    """AUC on the real rows when the synthetic batch is the scorer's context.

    Classes the batch does not cover are represented by their real rows.
    Returns NaN when the real rows hold fewer than two classes.
    """
    ctx_x, ctx_y = _monitor_context(train, x, y_synth)
    probs = softmax(scorer.score(ctx_x, ctx_y, train.features, train.n_classes))
    try:
        return auc(probs, train.labels)
    except MetricError:
        return math.nan


def run_sgld(model: EnergyModel, train: Dataset, y_synth, cfg: SgldConfig, *,
             x_init=None, fixed_mask=None, row_offset=0, callback=None,
             destandardize=True) -> SynthResult:
    """Run the sampler and return the best-AUC batch.

    ``train`` must be the (standardized) dataset behind ``model``'s context.
    ``x_init`` replaces the default initialization (no init draws are made).
    Entries where ``fixed_mask`` is true are reset to their ``x_init`` values
    after every update. ``callback(step, x)`` sees every post-update state.
    With ``destandardize=False`` the batch is returned in standardized space.
    """
    y_synth = np.asarray(y_synth, dtype=np.int64)
    m, d = y_synth.size, train.n_features
    streams = row_streams(cfg.seed, m, row_offset)
    active = _active_columns(train)
    if x_init is None:
        x = _init_from_streams(train, y_synth, cfg.init_noise_std, streams, active)
    else:
        x = np.array(x_init, dtype=float)
        if x.shape != (m, d):
            raise ConfigError(f"x_init has shape {x.shape}, expected {(m, d)}")
    fixed_values = None
    if fixed_mask is not None:
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        fixed_values = x[fixed_mask]

    trace = SgldTrace(seed=cfg.seed)
    best_auc, best_x, best_step = -math.inf, None, None
    noise = np.empty((0, m, d))
    # overflow is caught by the finiteness checks and reported as a divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.eta):
            if t % _NOISE_BLOCK == 0:
                b = min(_NOISE_BLOCK, cfg.eta - t)
                noise = np.stack([s.standard_normal((b, d)) for s in streams], axis=1)
            energy, grad = energy_and_grad(model, x, y_synth)
            if not (math.isfinite(energy) and np.all(np.isfinite(grad))):
                raise DivergenceError(t)
            trace.energies.append(energy)
            x = x + (-cfg.alpha * grad + cfg.sigma * noise[t % _NOISE_BLOCK]) * active
            if fixed_mask is not None:
                x[fixed_mask] = fixed_values
            if not np.all(np.isfinite(x)):
                raise DivergenceError(t + 1, "state")
            step = t + 1
            if step % cfg.auc_stride == 0 or step == cfg.eta:
                a = monitor_auc(model.scorer, train, x, y_synth)
                trace.steps.append(step)
                trace.auc.append(a)
                if a > best_auc:
                    best_auc, best_x, best_step = a, x.copy(), step
            if callback is not None:
                callback(step, x)
    if best_x is None:
        best_x, best_step = x, cfg.eta
    trace.best_step = best_step
    if destandardize and train.standardizer is not None:
        best_x = train.standardizer.destandardize(best_x)
    return SynthResult(best_x, y_synth.copy(), trace)


def labels_from_counts(counts, n_classes):
    """Expand {class_id: count} into a label vector grouped by ascending class id."""
    ids = sorted(int(k) for k in counts)
    for k in ids:
        if not 0 <= k < n_classes:
            raise ClassAbsentError(f"class {k} outside 0..{n_classes - 1}")
        if counts[k] < 0:
            raise ConfigError(f"negative count for class {k}")
    y = np.concatenate([np.full(int(counts[k]), k, np.int64) for k in ids]) if ids else np.zeros(0, np.int64)
    if y.size == 0:
        raise ConfigError("at least one synthetic row must be requested")
    return y


def generate(train: Dataset, counts, scorer=None, cfg: SgldConfig | None = None,
             variant="full", swap_weight=1.0) -> SynthResult:
    """Standardize, sample, destandardize.

    ``scorer`` is a scorer object, a dict of :func:`make_scorer` options, or
    None for the default soft-kNN scorer with median bandwidth. The median
    is measured once on standardized training rows.
    """
    cfg = cfg or SgldConfig()
    train_std = train if train.standardizer is not None else standardize(train, fit_standardizer(train))
    if scorer is None or isinstance(scorer, dict):
        scorer = make_scorer(**(scorer or {}), context=train_std.features)
    y_synth = labels_from_counts(counts, train.n_classes)
    model = EnergyModel(scorer, train_std.features, train_std.labels, train.n_classes,
                        variant=variant, swap_weight=swap_weight)
    res = run_sgld(model, train_std, y_synth, cfg, destandardize=False)
    raw = train_std.standardizer.destandardize(res.x_synth)
    # output rows live in the same space as the caller's training rows
    x = res.x_synth if train.standardizer is not None else raw
    ds = Dataset(
        features=x,
        labels=res.y_synth,
        feature_names=train.feature_names,
        n_classes=train.n_classes,
        label_names=train.label_names,
        label_column=train.label_column,
        label_position=train.label_position,
        standardizer=train.standardizer,
        synthetic=np.ones(res.y_synth.size, bool),
        partial=np.unique(res.y_synth).size != train.n_classes,
    )
    return SynthResult(raw, res.y_synth, res.trace, ds)
