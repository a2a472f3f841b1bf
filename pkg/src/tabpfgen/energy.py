"""Energies induced by a frozen classifier.

For logits ``f(x)`` the class-agnostic energy is ``-logsumexp_y f(x)[y]`` and
the class-conditional energy is ``-f(x)[y]``; the normalizer of p(y|x)
cancels between the two, so p(x|y) is proportional to ``exp(f(x)[y])``.

The ``full`` variant adds a role-swapped term: the real context rows are
scored with the current synthetic batch acting as context, and their
class-conditional energy (weighted by ``swap_weight``) is added to the
batch energy. That term couples the synthetic rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from tabpfgen.errors import ContextGradientUnsupported, LabelRangeError, ScorerError

VARIANTS = ("core", "full")


@dataclass(frozen=True)
class EnergyModel:
    scorer: object
    ctx_x: np.ndarray
    ctx_y: np.ndarray
    n_classes: int
    variant: str = "full"
    swap_weight: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ScorerError(f"energy variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.swap_weight >= 0:
            raise ScorerError("swap weight must be >= 0")
        if self.variant == "full" and self.swap_weight > 0 and not getattr(
            self.scorer, "supports_context_grad", False
        ):
            raise ContextGradientUnsupported(
                f"the full variant needs context gradients, which {type(self.scorer).__name__} lacks"
            )
        x = np.array(self.ctx_x, dtype=float)
        y = np.array(self.ctx_y, dtype=np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "ctx_x", x)
        object.__setattr__(self, "ctx_y", y)

    @property
    def coupled(self):
        return self.variant == "full" and self.swap_weight > 0

    def logits(self, x):
        return self.scorer.score(self.ctx_x, self.ctx_y, x, self.n_classes)


def agnostic_from_logits(logits):
    return -logsumexp(np.asarray(logits, dtype=float), axis=-1)


def conditional_from_logits(logits, y):
    logits = np.asarray(logits, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != logits.shape[:1]:
        raise LabelRangeError("one label per row is required")
    if y.size and (y.min() < 0 or y.max() >= logits.shape[1]):
        raise LabelRangeError(f"labels must lie in 0..{logits.shape[1] - 1}")
    return -logits[np.arange(y.size), y]


def class_agnostic_energy(model: EnergyModel, x):
    """-logsumexp over classes of the scorer logits, one value per row."""
    return agnostic_from_logits(model.logits(x))


def class_conditional_energy(model: EnergyModel, x, y):
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= model.n_classes):
        raise LabelRangeError(f"labels must lie in 0..{model.n_classes - 1}")
    return conditional_from_logits(model.logits(x), y)


def energy_and_grad(model: EnergyModel, x_synth, y_synth):
    """Total batch energy (sum over rows) and its gradient w.r.t. ``x_synth``."""
    x_synth = np.asarray(x_synth, dtype=float)
    y_synth = np.asarray(y_synth, dtype=np.int64)
    if y_synth.shape != (x_synth.shape[0],):
        raise LabelRangeError("one synthetic label per synthetic row is required")
    out = model.scorer.score_with_grads(
        model.ctx_x, model.ctx_y, x_synth, model.n_classes, y_synth
    )
    rows = np.arange(y_synth.size)
    total = -out.logits[rows, y_synth].sum()
    grad = -out.grad_query
    if model.coupled:
        # real rows scored against the synthetic batch; gradient flows into the batch as context
        swap = model.scorer.score_with_grads(
            x_synth, y_synth, model.ctx_x, model.n_classes, model.ctx_y, wrt_context=True
        )
        total = total - model.swap_weight * swap.logits[np.arange(model.ctx_y.size), model.ctx_y].sum()
        grad = grad - model.swap_weight * swap.grad_context
    return float(total), grad
