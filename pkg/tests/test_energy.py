import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_diff, rel_err
from tabpfgen.energy import (
    EnergyModel,
    agnostic_from_logits,
    class_agnostic_energy,
    class_conditional_energy,
    conditional_from_logits,
    energy_and_grad,
)
from tabpfgen.errors import ContextGradientUnsupported, LabelRangeError
from tabpfgen.scorer import LinearContextScorer, SoftKnnScorer, softmax


def test_uniform_logits():
    assert agnostic_from_logits(np.array([[0.0, 0.0]]))[0] == pytest.approx(-math.log(2), abs=1e-15)


def test_closed_form_logsumexp():
    # -(2 + ln(1 + e^-1)) evaluated with math.log1p for extra precision
    assert agnostic_from_logits(np.array([[2.0, 1.0]]))[0] == pytest.approx(
        -(2 + math.log1p(math.exp(-1))), abs=1e-15)
    assert agnostic_from_logits(np.array([[2.0, 1.0]]))[0] == pytest.approx(-2.313262, abs=1e-6)


@given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_shift_identity(logits, c):
    np.testing.assert_allclose(agnostic_from_logits(logits + c), agnostic_from_logits(logits) - c,
                               rtol=0, atol=1e-12)


def test_conditional_negation():
    assert conditional_from_logits(np.array([[2.0, 1.0]]), np.array([0]))[0] == -2.0


def test_conditional_label_range():
    with pytest.raises(LabelRangeError):
        conditional_from_logits(np.array([[2.0, 1.0]]), np.array([2]))


def test_identities_random_logits():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        f = rng.normal(scale=5, size=(4, 3))
        e_cond = np.stack([conditional_from_logits(f, np.full(4, k)) for k in range(3)], axis=1)
        np.testing.assert_allclose(softmax(-e_cond), softmax(f), rtol=0, atol=1e-12)
        via_cond = -np.log(np.exp(-e_cond - (-e_cond).max(1, keepdims=True)).sum(1)) - (-e_cond).max(1)
        np.testing.assert_allclose(agnostic_from_logits(f), via_cond, rtol=0, atol=1e-12)
        # p(y|x) two ways
        p2 = np.exp(f - (np.log(np.exp(f - f.max(1, keepdims=True)).sum(1, keepdims=True)) + f.max(1, keepdims=True)))
        np.testing.assert_allclose(softmax(f), p2, rtol=0, atol=1e-12)


def test_large_logits_finite():
    e = agnostic_from_logits(np.array([[1e6, 0.0, -1e6]]))
    assert np.isfinite(e).all() and e[0] == -1e6


def test_single_class_context_constant():
    ctx = np.array([[0.0, 0.0], [1.0, 1.0]])
    m = EnergyModel(SoftKnnScorer(1.0), ctx, np.zeros(2, int), 1, variant="core")
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert np.all(class_conditional_energy(m, x, np.zeros(5, int)) == -math.log(1 + 1e-12))


def test_model_energies_match_logits(rng):
    ctx = rng.normal(size=(8, 2))
    y = np.array([0, 1] * 4)
    m = EnergyModel(SoftKnnScorer(0.8), ctx, y, 2)
    x = rng.normal(size=(5, 2))
    f = m.logits(x)
    np.testing.assert_allclose(class_agnostic_energy(m, x), -np.log(np.exp(f).sum(1)), atol=1e-12)
    np.testing.assert_array_equal(class_conditional_energy(m, x, np.ones(5, int)), -f[:, 1])


def test_core_linear_gradient_exact(rng):
    ctx = rng.normal(size=(20, 3))
    y = rng.integers(0, 3, size=20)
    y[:3] = [0, 1, 2]
    s = LinearContextScorer()
    m = EnergyModel(s, ctx, y, 3, variant="core")
    ys = np.array([2, 0, 1, 1])
    _, g = energy_and_grad(m, rng.normal(size=(4, 3)), ys)
    np.testing.assert_array_equal(g, -s.fit(ctx, y, 3)[0][ys])


def test_full_lambda_zero_bitwise(rng):
    ctx = rng.normal(size=(10, 2))
    y = np.array([0, 1] * 5)
    xs, ys = rng.normal(size=(4, 2)), np.array([0, 1, 0, 1])
    core = energy_and_grad(EnergyModel(SoftKnnScorer(0.9), ctx, y, 2, variant="core"), xs, ys)
    full0 = energy_and_grad(EnergyModel(SoftKnnScorer(0.9), ctx, y, 2, variant="full", swap_weight=0.0), xs, ys)
    assert core[0] == full0[0] and np.array_equal(core[1], full0[1])
    full1 = energy_and_grad(EnergyModel(SoftKnnScorer(0.9), ctx, y, 2, variant="full"), xs, ys)
    assert not np.array_equal(core[1], full1[1])


def test_full_requires_context_grads():
    with pytest.raises(ContextGradientUnsupported):
        EnergyModel(LinearContextScorer(), np.zeros((2, 1)), [0, 1], 2, variant="full")
    EnergyModel(LinearContextScorer(), np.zeros((2, 1)), [0, 1], 2, variant="full", swap_weight=0.0)


def _fd_instance(rng):
    while True:
        ctx, xs = rng.normal(size=(5, 2)), rng.normal(size=(3, 2))
        pts = np.vstack([ctx, xs])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)[np.triu_indices(8, 1)]
        if d.min() > 1e-3:
            return ctx, xs


@pytest.mark.parametrize("variant", ["core", "full"])
def test_total_energy_gradient_fd(variant):
    rng = np.random.default_rng(21)
    for _ in range(100):
        ctx, xs = _fd_instance(rng)
        y = np.array([0, 1, 0, 1, 1])
        ys = rng.integers(0, 2, size=3)
        m = EnergyModel(SoftKnnScorer(rng.uniform(0.3, 2.0)), ctx, y, 2, variant=variant,
                        swap_weight=rng.uniform(0.5, 2.0))
        _, g = energy_and_grad(m, xs, ys)
        fd = central_diff(lambda v: energy_and_grad(m, v, ys)[0], xs)
        assert rel_err(g, fd) < 1e-4


def test_full_total_definition(rng):
    ctx, xs = _fd_instance(rng)
    y, ys = np.array([0, 1, 0, 1, 1]), np.array([1, 0, 1])
    s = SoftKnnScorer(0.7)
    m = EnergyModel(s, ctx, y, 2, variant="full", swap_weight=0.3)
    total, _ = energy_and_grad(m, xs, ys)
    expect = -s.score(ctx, y, xs, 2)[np.arange(3), ys].sum() - 0.3 * s.score(xs, ys, ctx, 2)[np.arange(5), y].sum()
    assert total == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("scorer", [SoftKnnScorer(0.8), LinearContextScorer()], ids=["soft_knn", "linear"])
def test_core_rows_independent(scorer, rng):
    ctx = rng.normal(size=(9, 2))
    y = np.array([0, 1, 2] * 3)
    m = EnergyModel(scorer, ctx, y, 3, variant="core")
    xs, ys = rng.normal(size=(4, 2)), np.array([0, 1, 2, 0])
    _, g = energy_and_grad(m, xs, ys)
    moved = xs.copy()
    moved[2] += 0.37
    _, g2 = energy_and_grad(m, moved, ys)
    mask = np.arange(4) != 2
    assert np.array_equal(g[mask], g2[mask])
    if isinstance(scorer, SoftKnnScorer):
        assert not np.array_equal(g[2], g2[2])
