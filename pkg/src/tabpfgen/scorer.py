"""Frozen in-context classifiers with closed-form gradients.

A scorer maps query rows to K logits given a labelled context, with no
trainable state of its own. Two implementations are provided:

* :class:`SoftKnnScorer` -- softmax attention over the context rows keyed on
  squared Euclidean distance; the logit of class k is the log of the
  attention mass that lands on class-k rows. It is differentiable with
  respect to both the query and the context, which the role-swapped energy
  needs.
* :class:`LinearContextScorer` -- one-vs-rest ridge logistic regression fit
  on the context by Newton iterations. Its query gradient is the weight
  row, which makes it a convenient analytic reference.

Any object with the same ``score`` / ``score_with_grads`` methods (and a
``supports_context_grad`` attribute) can be used instead.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import expit, log1p

from tabpfgen.errors import ContextGradientUnsupported, LabelRangeError, ScorerError

SCORER_KINDS = ("soft_knn", "linear_context")


@dataclass(frozen=True)
class LogitsWithGrads:
    logits: np.ndarray
    grad_query: np.ndarray
    grad_context: np.ndarray | None = None


def _check_inputs(ctx_x, ctx_y, query, n_classes):
    ctx_x = np.asarray(ctx_x, dtype=float)
    ctx_y = np.asarray(ctx_y, dtype=np.int64)
    query = np.asarray(query, dtype=float)
    if ctx_x.ndim != 2 or ctx_x.shape[0] == 0:
        raise ScorerError("context must be a non-empty 2-D array")
    if ctx_y.shape != (ctx_x.shape[0],):
        raise ScorerError("context labels must have one entry per context row")
    if n_classes < 1:
        raise ScorerError("n_classes must be >= 1")
    if ctx_y.min() < 0 or ctx_y.max() >= n_classes:
        raise LabelRangeError(f"context labels must lie in 0..{n_classes - 1}")
    if query.ndim != 2 or query.shape[1] != ctx_x.shape[1]:
        raise ScorerError(f"query shape {query.shape} does not match context width {ctx_x.shape[1]}")
    if not np.all(np.isfinite(query)):
        raise ScorerError("query contains non-finite values")
    return ctx_x, ctx_y, query


def _check_select(select, m, n_classes):
    select = np.asarray(select, dtype=np.int64)
    if select.shape != (m,):
        raise ScorerError(f"select must have one class id per query row ({m})")
    if m and (select.min() < 0 or select.max() >= n_classes):
        raise LabelRangeError(f"selected classes must lie in 0..{n_classes - 1}")
    return select


def _canonical_order(ctx_x, ctx_y):
    # sorting the context makes every reduction independent of row order
    keys = tuple(ctx_x[:, j] for j in reversed(range(ctx_x.shape[1]))) + (ctx_y,)
    return np.lexsort(keys)


def median_bandwidth(x) -> float:
    """Median pairwise Euclidean distance between rows (1.0 if degenerate)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        return 1.0
    h = float(np.median(pdist(x)))
    return h if h > 0 and np.isfinite(h) else 1.0


@dataclass(frozen=True)
class SoftKnnScorer:
    bandwidth: float = 1.0
    epsilon: float = 1e-12

    kind = "soft_knn"
    supports_context_grad = True

    def __post_init__(self):
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ScorerError(f"bandwidth must be a positive real, got {self.bandwidth}")
        if not self.epsilon > 0:
            raise ScorerError(f"epsilon must be positive, got {self.epsilon}")

    def _attention(self, ctx_x, ctx_y, query, n_classes):
        order = _canonical_order(ctx_x, ctx_y)
        xs, ys = ctx_x[order], ctx_y[order]
        logits_att = -cdist(query, xs, "sqeuclidean") / (2.0 * self.bandwidth**2)
        logits_att -= logits_att.max(axis=1, keepdims=True)
        w = np.exp(logits_att)
        w /= w.sum(axis=1, keepdims=True)
        onehot = np.zeros((xs.shape[0], n_classes))
        onehot[np.arange(xs.shape[0]), ys] = 1.0
        mass = w @ onehot
        return order, xs, ys, w, mass

    def score(self, ctx_x, ctx_y, query, n_classes):
        ctx_x, ctx_y, query = _check_inputs(ctx_x, ctx_y, query, n_classes)
        *_, mass = self._attention(ctx_x, ctx_y, query, n_classes)
        return np.log(mass + self.epsilon)

    def score_with_grads(self, ctx_x, ctx_y, query, n_classes, select, wrt_context=False):
        ctx_x, ctx_y, query = _check_inputs(ctx_x, ctx_y, query, n_classes)
        m = query.shape[0]
        select = _check_select(select, m, n_classes)
        order, xs, ys, w, mass = self._attention(ctx_x, ctx_y, query, n_classes)
        logits = np.log(mass + self.epsilon)
        rows = np.arange(m)
        s_sel = mass[rows, select]
        # d f_c / d a_i for the attention logit a_i = -|q - x_i|^2 / 2h^2
        in_class = ys[None, :] == select[:, None]
        coef = w * (in_class - s_sel[:, None]) / (s_sel + self.epsilon)[:, None]
        h2 = self.bandwidth**2
        grad_q = (coef @ xs - coef.sum(axis=1, keepdims=True) * query) / h2
        grad_ctx = None
        if wrt_context:
            g_sorted = (coef.T @ query - coef.sum(axis=0)[:, None] * xs) / h2
            grad_ctx = np.empty_like(g_sorted)
            grad_ctx[order] = g_sorted
        return LogitsWithGrads(logits, grad_q, grad_ctx)


@lru_cache(maxsize=64)
def _fit_ovr_cached(key, x_bytes, y_bytes, shape, n_classes, ridge, max_iter, tol):
    x = np.frombuffer(x_bytes, dtype=float).reshape(shape)
    y = np.frombuffer(y_bytes, dtype=np.int64)
    weights = np.zeros((n_classes, shape[1]))
    bias = np.zeros(n_classes)
    for k in range(n_classes):
        weights[k], bias[k] = _newton_binary_logistic(x, (y == k).astype(float), ridge, max_iter, tol)
    weights.setflags(write=False)
    bias.setflags(write=False)
    return weights, bias


def _binary_logistic_loss(xa, t, theta, ridge):
    z = xa @ theta
    # log(1 + e^z) - t z, computed stably
    nll = np.where(z > 0, z + log1p(np.exp(-np.abs(z))), log1p(np.exp(-np.abs(z)))) - t * z
    return nll.sum() + 0.5 * ridge * (theta[:-1] @ theta[:-1])


def _newton_binary_logistic(x, t, ridge, max_iter, tol):
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    penalty = np.full(d + 1, ridge)
    penalty[-1] = 0.0
    loss = _binary_logistic_loss(xa, t, theta, ridge)
    for _ in range(max_iter):
        p = expit(xa @ theta)
        grad = xa.T @ (p - t) + penalty * theta
        if np.linalg.norm(grad) < tol:
            break
        hess = (xa * (p * (1 - p))[:, None]).T @ xa + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(40):
            cand = theta - scale * step
            cand_loss = _binary_logistic_loss(xa, t, cand, ridge)
            if cand_loss <= loss:
                break
            scale *= 0.5
        else:
            break
        theta, loss = cand, cand_loss
    return theta[:-1], theta[-1]


@dataclass(frozen=True)
class LinearContextScorer:
    ridge: float = 1e-6
    max_iter: int = 50
    tol: float = 1e-10

    kind = "linear_context"
    supports_context_grad = False

    def __post_init__(self):
        if self.ridge < 0 or self.max_iter < 1:
            raise ScorerError("linear_context needs ridge >= 0 and max_iter >= 1")

    def fit(self, ctx_x, ctx_y, n_classes):
        """Return the (W, b) pair fitted on the context; W is K x D."""
        order = _canonical_order(ctx_x, ctx_y)
        xs = np.ascontiguousarray(ctx_x[order])
        ys = np.ascontiguousarray(ctx_y[order])
        key = hashlib.sha1(xs.tobytes() + ys.tobytes()).hexdigest()
        return _fit_ovr_cached(key, xs.tobytes(), ys.tobytes(), xs.shape, int(n_classes),
                               float(self.ridge), int(self.max_iter), float(self.tol))

    def score(self, ctx_x, ctx_y, query, n_classes):
        ctx_x, ctx_y, query = _check_inputs(ctx_x, ctx_y, query, n_classes)
        weights, bias = self.fit(ctx_x, ctx_y, n_classes)
        return query @ weights.T + bias

    def score_with_grads(self, ctx_x, ctx_y, query, n_classes, select, wrt_context=False):
        if wrt_context:
            raise ContextGradientUnsupported("linear_context does not differentiate through its fit")
        ctx_x, ctx_y, query = _check_inputs(ctx_x, ctx_y, query, n_classes)
        select = _check_select(select, query.shape[0], n_classes)
        weights, bias = self.fit(ctx_x, ctx_y, n_classes)
        return LogitsWithGrads(query @ weights.T + bias, weights[select].copy(), None)


def make_scorer(kind="soft_knn", bandwidth="median", epsilon=1e-12, context=None):
    """Build a scorer from config values.

    ``bandwidth="median"`` resolves the median heuristic on ``context`` once;
    the returned scorer is frozen from then on.
    """
    if kind == "soft_knn":
        if isinstance(bandwidth, str):
            if bandwidth != "median":
                try:
                    bandwidth = float(bandwidth)
                except ValueError:
                    raise ScorerError(f"bandwidth must be 'median' or a positive real, got {bandwidth!r}") from None
            elif context is None:
                raise ScorerError("median bandwidth needs a context to measure")
            else:
                bandwidth = median_bandwidth(context)
        return SoftKnnScorer(bandwidth=float(bandwidth), epsilon=float(epsilon))
    if kind == "linear_context":
        return LinearContextScorer()
    raise ScorerError(f"unknown scorer kind {kind!r}; expected one of {SCORER_KINDS}")


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
