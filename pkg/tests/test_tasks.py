import numpy as np
import pytest

from tabpfgen.data import (
    Dataset,
    fit_standardizer,
    make_correlated_gaussian,
    make_two_moons,
    standardize,
)
from tabpfgen.errors import ConfigError, ImputationError, InvalidDatasetError, SmoteError
from tabpfgen.sampler import SgldConfig
from tabpfgen.tasks import (
    BalanceSpec,
    MissingMask,
    augment,
    balance,
    imputation_rmse,
    impute,
    mean_impute,
    observed_standardizer,
    random_mask,
    replace,
    sampling,
    sampling_generator,
    smote,
    smote_generator,
    tabpfgen_generator,
)

FAST = SgldConfig(eta=10)


def two_class(counts, seed=0, d=2):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    x = rng.normal(size=(y.size, d)) + y[:, None] * 2.0
    return Dataset(x, y, tuple(f"f{j}" for j in range(d)), len(counts))


def real_part(d):
    return d.subset(np.flatnonzero(~d.synthetic))


# ---------------------------------------------------------------- protocols


def test_augment_counts_and_provenance():
    train = two_class([60, 40])
    out = augment(train, tabpfgen_generator(cfg=FAST))
    assert out.n_rows == 200
    assert out.class_counts().tolist() == [120, 80]
    real = real_part(out)
    assert np.array_equal(real.features, train.features)
    assert np.array_equal(real.labels, train.labels)
    assert out.synthetic.sum() == 100


def test_replace_histogram_and_no_copies():
    train = two_class([30, 20])
    out = replace(train, tabpfgen_generator(cfg=SgldConfig(eta=5, sigma=0.05)))
    assert out.class_counts().tolist() == [30, 20]
    assert out.synthetic.all()
    for row in out.features:
        assert not np.any(np.all(train.features == row, axis=1))


def test_protocols_do_not_mutate_input():
    train = two_class([20, 10])
    before = train.features.copy()
    for fn in (lambda t: augment(t, sampling_generator(1)), lambda t: replace(t, sampling_generator(1)),
               lambda t: balance(t, BalanceSpec(), sampling_generator(1))):
        fn(train)
    assert np.array_equal(train.features, before)


def test_balance_equalize():
    train = two_class([90, 10])
    out = balance(train, BalanceSpec("equalize"), sampling_generator(0))
    assert out.class_counts().tolist() == [90, 90]
    synth = out.subset(np.flatnonzero(out.synthetic))
    assert synth.n_rows == 80 and np.all(synth.labels == 1)


def test_balance_equalize_multiclass():
    train = two_class([13, 40, 7])
    out = balance(train, BalanceSpec(), smote_generator(k=3, seed=0))
    assert out.class_counts().tolist() == [40, 40, 40]


def test_balance_already_balanced_is_identity():
    train = two_class([25, 25])
    assert balance(train, BalanceSpec(), tabpfgen_generator(cfg=FAST)) is train


def test_balance_explicit_targets():
    train = two_class([30, 10])
    out = balance(train, BalanceSpec({1: 25}), sampling_generator(0))
    assert out.class_counts().tolist() == [30, 25]
    with pytest.raises(ConfigError):
        BalanceSpec({0: 5}).deficits(train)
    with pytest.raises(ConfigError):
        BalanceSpec("double").deficits(train)


def test_balance_needs_two_classes():
    d = Dataset(np.zeros((3, 1)), [0, 0, 0], ("a",), 1)
    with pytest.raises(InvalidDatasetError):
        balance(d, BalanceSpec(), sampling_generator(0))


def test_sampling_rows_are_copies():
    train = two_class([10, 10])
    out = sampling(train, {0: 7, 1: 3}, seed=2)
    assert out.class_counts().tolist() == [7, 3]
    for x, y in zip(out.features, out.labels):
        hit = np.all(train.features == x, axis=1)
        assert hit.any() and train.labels[hit][0] == y


# ---------------------------------------------------------------- SMOTE


def test_smote_size_and_labels():
    train = two_class([20, 12])
    out = smote(train, {0: 5, 1: 9}, k=5, seed=1)
    assert out.n_rows == 14
    assert out.labels.tolist() == [0] * 5 + [1] * 9
    assert out.synthetic.all()


def test_smote_zero_gap_returns_anchor():
    train = two_class([10, 10])
    out = smote(train, {0: 6}, k=3, seed=4, max_gap=0.0)
    for row in out.features:
        assert np.any(np.all(train.features[train.labels == 0] == row, axis=1))


def test_smote_inside_class_range_1d():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(30, 1))
    y = (np.arange(30) % 2)
    train = Dataset(x, y, ("a",), 2)
    out = smote(train, {0: 50, 1: 50}, k=4, seed=3)
    for k in (0, 1):
        members = x[y == k, 0]
        vals = out.features[out.labels == k, 0]
        assert members.min() <= vals.min() and vals.max() <= members.max()


def test_smote_colinear_segment():
    x = np.array([[0.0, 0.0], [2.0, 1.0], [5.0, 5.0], [6.0, 7.0]])
    train = Dataset(x, [0, 0, 1, 1], ("a", "b"), 2)
    out = smote(train, {0: 20, 1: 20}, k=1, seed=0)
    for row, k in zip(out.features, out.labels):
        a, b = x[2 * k], x[2 * k + 1]
        t = np.dot(row - a, b - a) / np.dot(b - a, b - a)
        assert -1e-12 <= t <= 1 + 1e-12
        assert np.linalg.norm(a + t * (b - a) - row) < 1e-12


def test_smote_neighbours_match_brute_force():
    # with k=1 every synthetic point lies on the segment to the exact nearest neighbour
    rng = np.random.default_rng(8)
    x = rng.normal(size=(12, 2))
    train = Dataset(x, np.zeros(12, int), ("a", "b"), 1)
    out = smote(train, {0: 40}, k=1, seed=2)
    nearest = {}
    for i in range(12):
        d = [np.linalg.norm(x[i] - x[j]) if j != i else np.inf for j in range(12)]
        nearest[i] = int(np.argmin(d))
    for row in out.features:
        ok = False
        for i, j in nearest.items():
            seg = x[j] - x[i]
            t = np.dot(row - x[i], seg) / np.dot(seg, seg)
            if -1e-12 <= t <= 1 + 1e-12 and np.linalg.norm(x[i] + t * seg - row) < 1e-10:
                ok = True
                break
        assert ok


def test_smote_class_too_small():
    train = two_class([10, 3])
    with pytest.raises(SmoteError) as exc:
        smote(train, {1: 4}, k=5)
    assert exc.value.code == "smote_class_too_small"


def test_smote_deterministic():
    train = two_class([10, 10])
    a = smote(train, {0: 5, 1: 5}, seed=9).features
    assert np.array_equal(a, smote(train, {0: 5, 1: 5}, seed=9).features)


# ---------------------------------------------------------------- imputation


def test_random_mask_exact_and_nested():
    m3 = random_mask((40, 5), 0.3, seed=1).mask
    m5 = random_mask((40, 5), 0.5, seed=1).mask
    assert m3.sum() == 60 and m5.sum() == 100
    assert np.all(m5[m3])
    with pytest.raises(ConfigError):
        random_mask((4, 2), 1.0)


def test_mask_shape_checked():
    d = two_class([5, 5])
    with pytest.raises(InvalidDatasetError):
        mean_impute(d, MissingMask(np.zeros((3, 2), bool)))


def test_mean_impute_column():
    d = Dataset(np.array([[1.0], [99.0], [3.0]]), [0, 1, 0], ("a",), 2)
    m = MissingMask(np.array([[False], [True], [False]]))
    assert mean_impute(d, m).features[:, 0].tolist() == [1.0, 2.0, 3.0]


def test_mean_impute_identity_and_errors():
    d = two_class([5, 5])
    assert mean_impute(d, MissingMask(np.zeros((10, 2), bool))) is d
    full = np.zeros((10, 2), bool)
    full[:, 1] = True
    with pytest.raises(ImputationError):
        mean_impute(d, MissingMask(full))


def test_mean_impute_standardized_near_zero():
    d = make_correlated_gaussian(200, 0.9, seed=0)
    m = random_mask(d.features.shape, 0.4, seed=0)
    z = d.with_features(observed_standardizer(d.features, m.mask).standardize(d.features))
    out = mean_impute(z, m)
    assert np.all(np.abs(out.features[m.mask]) < 1e-12)


def test_impute_empty_mask():
    d = make_correlated_gaussian(50, 0.9, seed=0)
    out, err = impute(d, MissingMask(np.zeros(d.features.shape, bool)), ground_truth=d)
    assert out is d and err == 0.0


def test_impute_keeps_observed_and_ignores_masked_values():
    d = make_correlated_gaussian(120, 0.9, seed=1)
    m = random_mask(d.features.shape, 0.2, seed=2)
    scrambled = d.with_features(np.where(m.mask, 1e6, d.features))
    out1, _ = impute(d, m, cfg=FAST)
    out2, _ = impute(scrambled, m, cfg=FAST)
    assert np.array_equal(out1.features, out2.features)
    assert np.array_equal(out1.features[~m.mask], d.features[~m.mask])


def test_impute_no_context_for_class():
    d = make_correlated_gaussian(40, 0.9, seed=0)
    mask = np.zeros(d.features.shape, bool)
    mask[d.labels == 1, 0] = True
    with pytest.raises(ImputationError) as exc:
        impute(d, MissingMask(mask), cfg=FAST)
    assert exc.value.code == "impute_no_context"


def test_impute_fixed_point_zero_gradient():
    # single-class context: zero gradient, sigma 0 -> missing entries keep their mean start
    rng = np.random.default_rng(0)
    d = Dataset(rng.normal(size=(30, 2)), np.zeros(30, int), ("a", "b"), 1)
    m = random_mask(d.features.shape, 0.2, seed=1)
    cfg = SgldConfig(sigma=0.0, eta=20)
    first, _ = impute(d, m, cfg=cfg)
    np.testing.assert_allclose(first.features, mean_impute(d, m).features, rtol=0, atol=1e-12)
    second, _ = impute(first, m, cfg=cfg)
    np.testing.assert_allclose(second.features, first.features, rtol=0, atol=1e-12)


def test_impute_beats_mean_at_30_percent():
    d = make_correlated_gaussian(400, 0.9, seed=0)
    m = random_mask(d.features.shape, 0.3, seed=0)
    _, err = impute(d, m, ground_truth=d)
    assert err < imputation_rmse(mean_impute(d, m), d, m)


def test_imputation_rmse_scale():
    d = make_correlated_gaussian(400, 0.9, seed=0)
    m = random_mask(d.features.shape, 0.3, seed=0)
    # mean imputation error is near one standard deviation in standardized units
    assert 0.8 < imputation_rmse(mean_impute(d, m), d, m) < 1.2
