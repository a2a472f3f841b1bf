"""Downstream classifiers and the seeded experiment runner."""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from tabpfgen import __version__
from tabpfgen.data import Dataset, SplitSpec, fit_standardizer, standardize, stratified_split
from tabpfgen.errors import ConvergenceError, InvalidDatasetError, TabPFGenError
from tabpfgen.metrics import auc
from tabpfgen.sampler import SgldConfig
from tabpfgen.scorer import make_scorer, softmax
from tabpfgen.tasks import (
    BalanceSpec,
    augment,
    balance,
    replace,
    sampling_generator,
    smote_generator,
    tabpfgen_generator,
)

log = logging.getLogger(__name__)

TASKS = ("replace", "augment", "balance")
GENERATORS = ("original", "sampling", "smote", "tabpfgen")
MODELS = ("logreg", "knn", "scorer")


# ---------------------------------------------------------------- logistic regression


class LogisticRegression:
    """Multinomial logistic regression fit by damped Newton iterations.

    Minimizes mean cross-entropy + ``l2 / 2 * |theta|^2``; the penalty covers
    the intercepts too, which keeps the Hessian positive definite.
    """

    def __init__(self, l2=1e-3, max_iter=100, tol=1e-9):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def _loss_grad(self, xa, t, theta):
        n = xa.shape[0]
        z = xa @ theta.T
        lse = logsumexp(z, axis=1)
        loss = np.mean(lse - (z * t).sum(axis=1)) + 0.5 * self.l2 * np.sum(theta**2)
        p = np.exp(z - lse[:, None])
        grad = (p - t).T @ xa / n + self.l2 * theta
        return loss, grad, p

    def fit(self, x, y, n_classes=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        k = int(n_classes or y.max() + 1)
        if k < 2:
            raise InvalidDatasetError("logistic regression needs at least two classes")
        n, d = x.shape
        xa = np.hstack([x, np.ones((n, 1))])
        t = np.zeros((n, k))
        t[np.arange(n), y] = 1.0
        theta = np.zeros((k, d + 1))
        loss, grad, p = self._loss_grad(xa, t, theta)
        for it in range(self.max_iter):
            gnorm = np.linalg.norm(grad)
            if gnorm < self.tol:
                break
            # H[(a,i),(b,j)] = mean_n x_ni (p_na d_ab - p_na p_nb) x_nj + l2 d
            w = p[:, :, None] * (np.eye(k)[None] - p[:, None, :])
            hess = np.einsum("nab,ni,nj->aibj", w, xa, xa).reshape(k * (d + 1), k * (d + 1)) / n
            hess += self.l2 * np.eye(k * (d + 1))
            step = np.linalg.solve(hess, grad.ravel()).reshape(k, d + 1)
            scale = 1.0
            for _ in range(50):
                cand = theta - scale * step
                c_loss, c_grad, c_p = self._loss_grad(xa, t, cand)
                if c_loss <= loss - 1e-4 * scale * np.sum(grad * step):
                    break
                # near the optimum loss differences drown in rounding; accept on gradient decrease
                if scale == 1.0 and np.linalg.norm(c_grad) < gnorm and c_loss <= loss + 1e-14:
                    break
                scale *= 0.5
            theta, loss, grad, p = cand, c_loss, c_grad, c_p
        else:
            gnorm = np.linalg.norm(grad)
            if gnorm >= self.tol:
                raise ConvergenceError(self.max_iter, gnorm)
        self.coef_ = theta[:, :-1]
        self.intercept_ = theta[:, -1]
        self.n_classes_ = k
        self.grad_norm_ = float(np.linalg.norm(grad))
        return self

    def decision_function(self, x):
        return np.asarray(x, dtype=float) @ self.coef_.T + self.intercept_

    def predict_proba(self, x):
        return softmax(self.decision_function(x))


def train_logreg(train: Dataset, l2=1e-3, max_iter=100):
    return LogisticRegression(l2=l2, max_iter=max_iter).fit(train.features, train.labels, train.n_classes)


# ---------------------------------------------------------------- k-NN


class KNeighbors:
    """Plain neighbour vote; equal distances are broken by training row index."""

    def __init__(self, k=5):
        self.k = k

    def fit(self, x, y, n_classes=None):
        self.x_ = np.asarray(x, dtype=float)
        self.y_ = np.asarray(y, dtype=np.int64)
        if not 1 <= self.k <= self.x_.shape[0]:
            raise InvalidDatasetError(f"k={self.k} must lie in 1..{self.x_.shape[0]}")
        self.n_classes_ = int(n_classes or self.y_.max() + 1)
        return self

    def neighbours(self, x):
        dist = cdist(np.asarray(x, dtype=float), self.x_, "sqeuclidean")
        return np.argsort(dist, axis=1, kind="stable")[:, : self.k]

    def predict_proba(self, x):
        nb = self.y_[self.neighbours(x)]
        votes = np.zeros((nb.shape[0], self.n_classes_))
        for c in range(self.n_classes_):
            votes[:, c] = (nb == c).sum(axis=1)
        return votes / self.k


def train_knn(train: Dataset, k=5):
    return KNeighbors(k=min(k, train.n_rows)).fit(train.features, train.labels, train.n_classes)


class ScorerClassifier:
    """The frozen in-context scorer used directly as a downstream model."""

    def __init__(self, kind="soft_knn", bandwidth="median", epsilon=1e-12):
        self.options = dict(kind=kind, bandwidth=bandwidth, epsilon=epsilon)

    def fit(self, x, y, n_classes=None):
        self.x_ = np.asarray(x, dtype=float)
        self.y_ = np.asarray(y, dtype=np.int64)
        self.n_classes_ = int(n_classes or self.y_.max() + 1)
        self.scorer_ = make_scorer(**self.options, context=self.x_)
        return self

    def predict_proba(self, x):
        return softmax(self.scorer_.score(self.x_, self.y_, x, self.n_classes_))


def downstream_model(name, options=None):
    options = options or {}
    if name == "logreg":
        return LogisticRegression(l2=options.get("l2", 1e-3), max_iter=options.get("max_iter", 100))
    if name == "knn":
        return KNeighbors(k=options.get("k", 5))
    if name == "scorer":
        return ScorerClassifier(**options.get("scorer", {}))
    raise InvalidDatasetError(f"unknown downstream model {name!r}")


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentConfig:
    tasks: tuple = TASKS
    generators: tuple = GENERATORS
    models: tuple = MODELS
    seeds: tuple = (1, 2, 3)
    test_fraction: float = 0.5
    stratified: bool = True
    sgld: SgldConfig = field(default_factory=SgldConfig)
    variant: str = "full"
    swap_weight: float = 1.0
    scorer: dict = field(default_factory=dict)
    smote_k: int = 5
    knn_k: int = 5
    logreg_l2: float = 1e-3


@dataclass
class EvalReport:
    cells: dict
    config: dict
    version: str = __version__

    def to_dict(self):
        cells = []
        for (task, gen, model), runs in self.cells.items():
            aucs = [r["auc"] for r in runs if r.get("auc") is not None]
            cell = OrderedDict(task=task, generator=gen, model=model, runs=runs)
            cell["mean_auc"] = float(np.mean(aucs)) if aucs else None
            # population std; needs at least two successful runs
            cell["std_auc"] = float(np.std(aucs)) if len(aucs) >= 2 else None
            cell["n_failed"] = sum(1 for r in runs if r.get("error"))
            cells.append(cell)
        return OrderedDict(version=self.version, config=self.config, cells=cells)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def cell(self, task, generator, model):
        for c in self.to_dict()["cells"]:
            if (c["task"], c["generator"], c["model"]) == (task, generator, model):
                return c
        raise KeyError((task, generator, model))

    def to_csv_rows(self):
        rows = [["task", "generator", "model", "mean_auc", "std_auc", "n_runs", "n_failed"]]
        for c in self.to_dict()["cells"]:
            rows.append([c["task"], c["generator"], c["model"],
                         "" if c["mean_auc"] is None else repr(c["mean_auc"]),
                         "" if c["std_auc"] is None else repr(c["std_auc"]),
                         str(len(c["runs"])), str(c["n_failed"])])
        return rows


def _make_generator(name, cfg: ExperimentConfig, seed):
    if name == "sampling":
        return sampling_generator(seed=seed)
    if name == "smote":
        return smote_generator(k=cfg.smote_k, seed=seed)
    if name == "tabpfgen":
        sg = SgldConfig(**{**cfg.sgld.__dict__, "seed": seed})
        return tabpfgen_generator(scorer=cfg.scorer or None, cfg=sg, variant=cfg.variant,
                                  swap_weight=cfg.swap_weight)
    raise InvalidDatasetError(f"unknown generator {name!r}")


def build_training_set(task, generator_name, train, cfg, seed):
    if generator_name == "original":
        return train
    gen = _make_generator(generator_name, cfg, seed)
    if task == "replace":
        return replace(train, gen)
    if task == "augment":
        return augment(train, gen)
    if task == "balance":
        return balance(train, BalanceSpec("equalize"), gen)
    raise InvalidDatasetError(f"unknown task {task!r}")


def _model_options(cfg):
    return {"l2": cfg.logreg_l2, "k": cfg.knn_k, "scorer": cfg.scorer}


def evaluate_models(train: Dataset, test: Dataset, models, options=None):
    out = OrderedDict()
    for name in models:
        model = downstream_model(name, options).fit(train.features, train.labels, train.n_classes)
        out[name] = auc(model.predict_proba(test.features), test.labels)
    return out


def config_echo(cfg: ExperimentConfig):
    d = dict(cfg.__dict__)
    d["sgld"] = dict(cfg.sgld.__dict__)
    for k in ("tasks", "generators", "models", "seeds"):
        d[k] = list(d[k])
    return d


def run_experiment(dataset: Dataset, cfg: ExperimentConfig | None = None) -> EvalReport:
    """Split, generate, train downstream models and score test AUC for every seed.

    A failure in one (task, generator, seed) cell is recorded in that cell's
    run entries with its error code; the other cells still run.
    """
    cfg = cfg or ExperimentConfig()
    cells = OrderedDict()
    tasks = cfg.tasks
    for task in tasks:
        for gen in cfg.generators:
            for model in cfg.models:
                cells[(task, gen, model)] = []
    for seed in cfg.seeds:
        train, test = stratified_split(
            dataset, SplitSpec(cfg.test_fraction, cfg.stratified, seed)
        )
        st = fit_standardizer(train)
        train, test = standardize(train, st), standardize(test, st)
        for task in tasks:
            for gen in cfg.generators:
                try:
                    fit_set = build_training_set(task, gen, train, cfg, seed)
                    aucs = evaluate_models(fit_set, test, cfg.models, _model_options(cfg))
                    for model, a in aucs.items():
                        cells[(task, gen, model)].append({"seed": seed, "auc": a, "n_train": fit_set.n_rows})
                except TabPFGenError as exc:
                    log.warning("cell %s/%s seed %s failed: %s", task, gen, seed, exc)
                    for model in cfg.models:
                        cells[(task, gen, model)].append(
                            {"seed": seed, "auc": None, "error": exc.code, "message": str(exc)}
                        )
    return EvalReport(cells=cells, config=config_echo(cfg))

