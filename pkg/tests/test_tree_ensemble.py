import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sikjforest.core_data import QUANTILE_LEVELS
from sikjforest.errors import InvalidDataError
from sikjforest.tree_ensemble import (
    LSBoostModel,
    RandomForestModel,
    export_split_stats,
    feature_split_summary,
    forest_fit,
    forest_predict_all,
    forest_predict_mean,
    forest_predict_quantiles,
    load_model,
    lsboost_fit,
    lsboost_predict,
    lsboost_staged_mse,
    save_model,
    tree_fit,
    tree_predict,
)


def leaf(v, p=1):
    return tree_fit(np.zeros((1, p)), [v])


def sse(v):
    v = np.asarray(v, float)
    return float(((v - v.mean()) ** 2).sum()) if v.size else 0.0


def cart_oracle(x, y, depth, max_depth):
    """Greedy CART on one feature by enumerating every split; returns a predictor."""
    order = np.argsort(x)
    x, y = x[order], y[order]
    best = None
    if depth < max_depth and np.ptp(y) > 0:
        for j in range(1, x.size):
            gain = sse(y) - sse(y[:j]) - sse(y[j:])
            if gain > 1e-12 * sse(y) and (best is None or gain > best[0] + 1e-12 * sse(y)):
                best = (gain, j)
    if best is None:
        m = y.mean()
        return lambda q: m
    j = best[1]
    thr = (x[j - 1] + x[j]) / 2
    left = cart_oracle(x[:j], y[:j], depth + 1, max_depth)
    right = cart_oracle(x[j:], y[j:], depth + 1, max_depth)
    return lambda q: left(q) if q <= thr else right(q)


# ---- single trees ------------------------------------------------------------

def test_constant_target_single_leaf():
    t = tree_fit(np.random.default_rng(0).normal(size=(20, 3)), np.full(20, 4.5))
    assert t.node_count == 1 and t.root.is_leaf and t.root.value == 4.5
    assert tree_predict(t, [9.0, -9.0, 0.0]) == 4.5


def test_perfect_binary_split():
    X = np.array([[0], [0], [1], [1]], float)
    t = tree_fit(X, [0, 0, 10, 10])
    assert t.max_depth == 1 and t.node_count == 3
    assert t.root.threshold == 0.5
    assert sorted(t.value[[t.root.left, t.root.right]]) == [0.0, 10.0]


def test_memorizes_unique_rows():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    np.testing.assert_array_equal(tree_predict(tree_fit(X, y), X), y)


def test_threshold_ties_route_left():
    t = tree_fit(np.array([[1.0], [3.0]]), [0.0, 1.0])
    thr = t.root.threshold
    assert thr == 2.0
    assert tree_predict(t, [thr]) == 0.0
    assert tree_predict(t, [np.nextafter(thr, 10)]) == 1.0


def test_empty_data_rejected():
    with pytest.raises(InvalidDataError):
        tree_fit(np.empty((0, 2)), [])


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("max_depth", [1, 2, 3])
def test_tree_matches_exhaustive_cart(seed, max_depth):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    x = rng.permutation(n).astype(float) + rng.uniform(0, 0.5, n)
    y = rng.normal(size=n)
    t = tree_fit(x[:, None], y, max_depth=max_depth)
    oracle = cart_oracle(x, y, 0, max_depth)
    probes = np.concatenate([x, np.linspace(x.min() - 1, x.max() + 1, 40)])
    for q in probes:
        assert tree_predict(t, [q]) == pytest.approx(oracle(q), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_root_split_is_best_single_split(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.integers(0, 5, size=(15, 3)).astype(float)
    y = rng.normal(size=15)
    t = tree_fit(X, y, max_depth=1, min_leaf=2)
    gains = []
    for f in range(3):
        for thr in np.unique(X[:, f])[:-1]:
            m = X[:, f] <= thr
            if m.sum() >= 2 and (~m).sum() >= 2:
                gains.append(sse(y) - sse(y[m]) - sse(y[~m]))
    if t.root.is_leaf:
        assert not gains or max(gains) <= 1e-12
    else:
        m = X[:, t.root.feature_index] <= t.root.threshold
        assert sse(y) - sse(y[m]) - sse(y[~m]) == pytest.approx(max(gains), abs=1e-10)


def test_min_leaf_respected():
    rng = np.random.default_rng(2)
    t = tree_fit(rng.normal(size=(60, 4)), rng.normal(size=60), min_leaf=7)
    assert t.n_samples[t.feature == -1].min() >= 7


def test_equal_gain_keeps_first_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], float)  # identical columns
    t = tree_fit(X, [1, 1, 5, 5])
    assert t.root.feature_index == 0


# ---- forests -----------------------------------------------------------------

@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 6))
    y = X[:, 0] * 2 + np.sin(X[:, 1]) + rng.normal(0, 0.1, 120)
    return X, y


def test_degenerate_forest_is_a_tree(data):
    X, y = data
    f = forest_fit(X, y, n_trees=1, bootstrap=False, feature_subsample=None, min_leaf=3, seed=0)
    t = tree_fit(X, y, min_leaf=3)
    np.testing.assert_array_equal(forest_predict_mean(f, X), t.predict(X))


def test_forest_constant_target():
    X = np.random.default_rng(4).normal(size=(30, 3))
    f = forest_fit(X, np.full(30, 2.5), seed=1)
    assert f.n_trees == 56
    np.testing.assert_array_equal(forest_predict_all(f, X), 2.5)


def test_forest_seeded_determinism(data):
    X, y = data
    a = forest_predict_all(forest_fit(X, y, seed=42), X)
    b = forest_predict_all(forest_fit(X, y, seed=42), X)
    c = forest_predict_all(forest_fit(X, y, seed=43), X)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_forest_mean_definition_and_bounds(data):
    X, y = data
    f = forest_fit(X, y, n_trees=20, seed=5)
    per_tree = forest_predict_all(f, X)
    mean = forest_predict_mean(f, X)
    np.testing.assert_array_equal(mean, per_tree.mean(axis=0))
    assert np.all(per_tree.min(0) <= mean) and np.all(mean <= per_tree.max(0))
    shuffled = RandomForestModel(f.trees[::-1], f.n_features)
    np.testing.assert_allclose(forest_predict_mean(shuffled, X), mean, rtol=1e-12, atol=1e-12)


def test_forest_mean_of_three():
    f = RandomForestModel([leaf(1), leaf(2), leaf(3)], 1)
    assert forest_predict_mean(f, [0.0]) == 2.0


def test_quantiles_all_agree():
    f = RandomForestModel([leaf(7.0)] * 10, 1)
    np.testing.assert_array_equal(forest_predict_quantiles(f, [0.0], QUANTILE_LEVELS), 7.0)


def test_quantiles_one_deviant_of_56():
    f = RandomForestModel([leaf(0.0)] * 55 + [leaf(10.0)], 1)
    preds = np.sort(forest_predict_all(f, [0.0]))
    q = forest_predict_quantiles(f, [0.0], [0.5, 0.99])
    # Order-statistics oracle: position (n-1)*p between sorted samples.
    pos = 55 * 0.99
    lo = int(np.floor(pos))
    oracle_99 = preds[lo] + (pos - lo) * (preds[lo + 1] - preds[lo])
    assert q[0] == 0.0
    assert q[1] == pytest.approx(oracle_99)


def test_quantiles_monotone_and_bracket_mean(data):
    X, y = data
    f = forest_fit(X, y, n_trees=56, seed=6)
    q = forest_predict_quantiles(f, X, [0.0] + list(QUANTILE_LEVELS) + [1.0])
    assert np.all(np.diff(q, axis=1) >= 0)
    mean = forest_predict_mean(f, X)
    assert np.all(q[:, 0] <= mean) and np.all(mean <= q[:, -1])


# ---- boosting ----------------------------------------------------------------

def test_lsboost_constant_target():
    X = np.random.default_rng(7).normal(size=(30, 2))
    m = lsboost_fit(X, np.full(30, 3.0), n_stages=5)
    assert m.initial_value == 3.0
    assert all(t.node_count == 1 and t.value[0] == 0.0 for t in m.trees)


def test_lsboost_single_full_stage_fits_exactly(data):
    X, y = data
    m = lsboost_fit(X, y, n_stages=1, learn_rate=1.0, max_depth=None, min_leaf=1)
    np.testing.assert_allclose(lsboost_predict(m, X), y, atol=1e-12)


def test_lsboost_zero_stages_and_zero_rate(data):
    X, y = data
    assert lsboost_predict(lsboost_fit(X, y, n_stages=0), X[0]) == pytest.approx(y.mean())
    m = lsboost_fit(X, y, n_stages=1, learn_rate=0.0)
    assert lsboost_predict(m, X[0]) == m.initial_value


def test_lsboost_hand_accumulation(data):
    X, y = data
    m = lsboost_fit(X, y, n_stages=3, learn_rate=0.5, max_depth=2)
    x = X[4]
    hand = m.initial_value
    for tree, rate in m.stages:
        hand += rate * tree_predict(tree, x)
    assert lsboost_predict(m, x) == hand


def test_lsboost_mse_nonincreasing(data):
    X, y = data
    m = lsboost_fit(X, y, n_stages=50)
    mse = np.asarray(m.train_mse)
    assert np.all(np.diff(mse) <= 1e-12 * mse[0])
    np.testing.assert_allclose(lsboost_staged_mse(m, X, y), mse, rtol=1e-12, atol=1e-15)


def test_lsboost_is_point_only(data):
    assert LSBoostModel.supports_quantiles is False
    assert RandomForestModel.supports_quantiles is True
    m = lsboost_fit(*data, n_stages=3)
    with pytest.raises(TypeError):
        forest_predict_quantiles(m, data[0][0], QUANTILE_LEVELS)


# ---- split statistics --------------------------------------------------------

def test_split_stats_single_leaf_forest():
    assert export_split_stats(RandomForestModel([leaf(1.0)] * 3, 1)).empty


def test_split_stats_depth_one():
    t = tree_fit(np.array([[0], [0], [1], [1]], float), [0, 0, 10, 10])
    s = export_split_stats(t)
    assert len(s) == 1 and s.depth.iloc[0] == 0
    assert s.variance_reduction.iloc[0] == pytest.approx(25.0)


def test_split_stats_partition(data):
    X, y = data
    f = forest_fit(X, y, n_trees=8, seed=8)
    stats = export_split_stats(f, [f"f{i}" for i in range(6)])
    internal = sum(int(np.sum(t.feature != -1)) for t in f.trees)
    assert len(stats) == internal
    assert feature_split_summary(stats).n_splits.sum() == internal
    assert np.all(stats.variance_reduction > 0)


# ---- persistence -------------------------------------------------------------

def test_save_load_forest_round_trip(tmp_path, data):
    X, y = data
    f = forest_fit(X, y, n_trees=5, seed=9)
    f.meta["horizon"] = 2
    g = load_model(save_model(f, tmp_path / "f.npz"))
    assert g.meta == f.meta and g.params == f.params
    np.testing.assert_array_equal(forest_predict_all(g, X), forest_predict_all(f, X))


def test_save_load_boost_round_trip(tmp_path, data):
    X, y = data
    m = lsboost_fit(X, y, n_stages=4)
    g = load_model(save_model(m, tmp_path / "b.npz"))
    np.testing.assert_array_equal(lsboost_predict(g, X), lsboost_predict(m, X))
    assert g.train_mse == m.train_mse


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forest_mean_equals_tree_mean_any_seed(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 4))
    y = rng.normal(size=25)
    f = forest_fit(X, y, n_trees=6, seed=seed)
    x = rng.normal(size=4)
    assert forest_predict_mean(f, x) == pytest.approx(
        np.mean([tree_predict(t, x) for t in f.trees]), abs=1e-12)
