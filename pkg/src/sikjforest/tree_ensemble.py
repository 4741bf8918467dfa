"""Regression trees, bagged random forests and least-squares boosting.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``...) in the style of compiled tree libraries; a node is a
leaf when its ``feature`` entry is ``-1``.  Splits minimize the summed
squared error of the two children.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import InvalidConfigError, InvalidDataError

__all__ = [
    "LSBoostModel",
    "RandomForestModel",
    "RegressionTree",
    "TreeNode",
    "export_split_stats",
    "feature_split_summary",
    "forest_fit",
    "forest_predict_all",
    "forest_predict_mean",
    "forest_predict_quantiles",
    "load_model",
    "lsboost_fit",
    "lsboost_predict",
    "lsboost_staged_mse",
    "save_model",
    "tree_fit",
    "tree_predict",
]

FORMAT_VERSION = 1
LEAF = -1


@dataclass(frozen=True)
class TreeNode:
    """Read-only view of one node.  ``feature_index`` is ``None`` for leaves."""

    node_id: int
    depth: int
    n_samples: int
    value: float
    mse: float
    feature_index: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    mse: np.ndarray
    depth: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def node(self, i: int) -> TreeNode:
        if self.feature[i] == LEAF:
            return TreeNode(i, int(self.depth[i]), int(self.n_samples[i]),
                            float(self.value[i]), float(self.mse[i]))
        return TreeNode(i, int(self.depth[i]), int(self.n_samples[i]), float(self.value[i]),
                        float(self.mse[i]), int(self.feature[i]), float(self.threshold[i]),
                        int(self.left[i]), int(self.right[i]))

    @property
    def root(self) -> TreeNode:
        return self.node(0)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = _as_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while np.any(active):
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _NODE_FIELDS}


_NODE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples", "mse", "depth")


def _as_matrix(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise InvalidDataError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# CART
# --------------------------------------------------------------------------

def _best_split(X, y, idx, features, min_leaf):
    """Best ``(gain, feature, threshold, n_left)`` for the rows ``idx``."""
    n = idx.size
    yc = y[idx] - y[idx].mean()
    parent = float(yc @ yc)
    best = None
    best_gain = parent * 1e-12
    sizes = np.arange(1, n, dtype=float)
    size_ok = (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not np.any(size_ok):
        return None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        ys = yc[order]
        valid = size_ok & (xs[:-1] < xs[1:])
        if not np.any(valid):
            continue
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys * ys)
        left_sum, left_sq = s1[:-1], s2[:-1]
        right_sum, right_sq = s1[-1] - left_sum, s2[-1] - left_sq
        sse = (left_sq - left_sum ** 2 / sizes) + (right_sq - right_sum ** 2 / (n - sizes))
        gain = np.where(valid, parent - sse, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            lo, hi = xs[j], xs[j + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best_gain = float(gain[j])
            best = (best_gain, int(f), float(thr))
    return best


def tree_fit(X, y, max_depth: int | None = None, min_leaf: int = 1,
             feature_subsample: int | None = None, seed=None) -> RegressionTree:
    """Grow a least-squares regression tree.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
    max_depth : int, optional
        Maximum depth; unlimited when ``None``.
    min_leaf : int
        Minimum number of training rows in each leaf.
    feature_subsample : int, optional
        Features drawn (without replacement) as split candidates at each
        node.  All features when ``None``.
    seed : int, SeedSequence or Generator, optional
        Drives feature subsampling only.

    Candidate features are scanned in ascending index and the first of
    equally good splits wins.  Thresholds are midpoints between adjacent
    distinct values and rows with ``x <= threshold`` go left.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise InvalidDataError(f"cannot fit a tree on X {X.shape} and y {y.shape}")
    if min_leaf < 1:
        raise InvalidConfigError("min_leaf must be at least 1")
    n, p = X.shape
    m = p if feature_subsample is None else int(feature_subsample)
    if not 1 <= m <= p:
        raise InvalidConfigError(f"feature_subsample must lie in 1..{p}, got {m}")
    rng = _rng(seed)

    cols = {name: [] for name in _NODE_FIELDS}
    stack = [(np.arange(n), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node_id = len(cols["feature"])
        if parent >= 0:
            cols["right" if is_right else "left"][parent] = node_id
        ys = y[idx]
        mean = float(ys.mean())
        mse = float(np.mean((ys - mean) ** 2))
        cols["value"].append(mean)
        cols["n_samples"].append(idx.size)
        cols["mse"].append(mse)
        cols["depth"].append(depth)
        cols["left"].append(LEAF)
        cols["right"].append(LEAF)

        split = None
        if (max_depth is None or depth < max_depth) and idx.size >= 2 * min_leaf and np.ptp(ys) > 0:
            features = np.arange(p) if m == p else np.sort(rng.choice(p, m, replace=False))
            split = _best_split(X, y, idx, features, min_leaf)
        if split is None:
            cols["feature"].append(LEAF)
            cols["threshold"].append(np.nan)
            continue
        _, f, thr = split
        cols["feature"].append(f)
        cols["threshold"].append(thr)
        go_left = X[idx, f] <= thr
        # Right pushed first so the left subtree is numbered next.
        stack.append((idx[~go_left], depth + 1, node_id, True))
        stack.append((idx[go_left], depth + 1, node_id, False))

    return RegressionTree(
        feature=np.asarray(cols["feature"], dtype=np.int64),
        threshold=np.asarray(cols["threshold"], dtype=float),
        left=np.asarray(cols["left"], dtype=np.int64),
        right=np.asarray(cols["right"], dtype=np.int64),
        value=np.asarray(cols["value"], dtype=float),
        n_samples=np.asarray(cols["n_samples"], dtype=np.int64),
        mse=np.asarray(cols["mse"], dtype=float),
        depth=np.asarray(cols["depth"], dtype=np.int64),
        n_features=p,
    )


def tree_predict(tree: RegressionTree, x):
    """Prediction for one feature vector (float) or a matrix of rows (array)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(tree.predict(x)[0])
    return tree.predict(x)


# --------------------------------------------------------------------------
# Random forest
# --------------------------------------------------------------------------

@dataclass
class RandomForestModel:
    trees: list[RegressionTree]
    n_features: int
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    supports_quantiles = True


def default_feature_subsample(n_features: int) -> int:
    return max(1, math.ceil(n_features / 3))


def forest_fit(X, y, n_trees: int = 56, feature_subsample: int | str | None = "third",
               min_leaf: int = 5, max_depth: int | None = None, bootstrap: bool = True,
               seed=None) -> RandomForestModel:
    """Bagged regression forest.

    Tree ``i`` draws its bootstrap sample and its feature subsets from
    ``SeedSequence(seed).spawn(n_trees)[i]``, so results depend only on the
    master seed.  ``feature_subsample="third"`` uses ``ceil(p / 3)``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise InvalidDataError(f"cannot fit a forest on X {X.shape} and y {y.shape}")
    if n_trees < 1:
        raise InvalidConfigError("n_trees must be at least 1")
    n, p = X.shape
    if feature_subsample == "third":
        feature_subsample = default_feature_subsample(p)
    elif feature_subsample is not None:
        feature_subsample = min(int(feature_subsample), p)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    trees = []
    for child in root.spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            rows = rng.integers(0, n, n)
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        trees.append(tree_fit(Xb, yb, max_depth=max_depth, min_leaf=min_leaf,
                              feature_subsample=feature_subsample, seed=rng))
    params = dict(n_trees=n_trees, feature_subsample=feature_subsample, min_leaf=min_leaf,
                  max_depth=max_depth, bootstrap=bootstrap,
                  seed=None if seed is None else _seed_repr(seed))
    return RandomForestModel(trees, p, params)


def _seed_repr(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy) if isinstance(seed.entropy, int) else str(seed.entropy)
    return str(seed)


def forest_predict_all(model: RandomForestModel, x) -> np.ndarray:
    """Per-tree predictions, shape ``(n_trees,)`` for a vector or ``(n_trees, n)``."""
    if not isinstance(model, RandomForestModel):
        # Boosted stages are not exchangeable draws; their spread is no predictive distribution.
        raise TypeError(f"{type(model).__name__} has no per-tree predictive spread")
    X = _as_matrix(x, model.n_features)
    out = np.stack([t.predict(X) for t in model.trees])
    return out[:, 0] if np.ndim(x) == 1 else out


def forest_predict_mean(model: RandomForestModel, x):
    preds = forest_predict_all(model, x)
    mean = preds.mean(axis=0)
    return float(mean) if np.ndim(x) == 1 else mean


def forest_predict_quantiles(model: RandomForestModel, x, levels: Sequence[float]) -> np.ndarray:
    """Empirical quantiles of the per-tree predictions.

    Linear interpolation between order statistics.  Output has shape
    ``(len(levels),)`` for a vector and ``(n, len(levels))`` for a matrix.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise InvalidConfigError("at least one quantile level is required")
    if np.any((levels < 0) | (levels > 1)):
        raise InvalidConfigError("quantile levels must lie in [0, 1]")
    preds = forest_predict_all(model, x)
    q = np.quantile(preds, levels, axis=0, method="linear")
    q = np.moveaxis(np.asarray(q), 0, -1)
    order = np.argsort(levels, kind="stable")
    q[..., order] = np.maximum.accumulate(q[..., order], axis=-1)
    return q


# --------------------------------------------------------------------------
# LSBoost
# --------------------------------------------------------------------------

@dataclass
class LSBoostModel:
    initial_value: float
    trees: list[RegressionTree]
    learn_rates: list[float]
    n_features: int
    params: dict = field(default_factory=dict)
    train_mse: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_stages(self) -> int:
        return len(self.trees)

    @property
    def stages(self) -> list[tuple[RegressionTree, float]]:
        return list(zip(self.trees, self.learn_rates))

    supports_quantiles = False


def lsboost_fit(X, y, n_stages: int = 100, learn_rate: float = 1.0, max_depth: int | None = 3,
                min_leaf: int = 5, seed=None) -> LSBoostModel:
    """Least-squares boosting: each stage fits a tree to the current residuals.

    ``train_mse[m]`` is the training MSE after ``m`` stages (index 0 is the
    constant initial model).
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise InvalidDataError(f"cannot fit boosting on X {X.shape} and y {y.shape}")
    if n_stages < 0:
        raise InvalidConfigError("n_stages must be nonnegative")
    rng = _rng(seed)
    f0 = float(y.mean())
    fitted = np.full(y.size, f0)
    trees, rates = [], []
    history = [float(np.mean((y - fitted) ** 2))]
    for _ in range(n_stages):
        tree = tree_fit(X, y - fitted, max_depth=max_depth, min_leaf=min_leaf, seed=rng)
        fitted = fitted + learn_rate * tree.predict(X)
        trees.append(tree)
        rates.append(float(learn_rate))
        history.append(float(np.mean((y - fitted) ** 2)))
    params = dict(n_stages=n_stages, learn_rate=learn_rate, max_depth=max_depth, min_leaf=min_leaf)
    return LSBoostModel(f0, trees, rates, X.shape[1], params, history)


def lsboost_predict(model: LSBoostModel, x):
    """Point prediction ``F_0 + sum_m rate_m * tree_m(x)``."""
    X = _as_matrix(x, model.n_features)
    out = np.full(X.shape[0], model.initial_value)
    for tree, rate in zip(model.trees, model.learn_rates):
        out += rate * tree.predict(X)
    return float(out[0]) if np.ndim(x) == 1 else out


def lsboost_staged_mse(model: LSBoostModel, X, y) -> np.ndarray:
    """MSE on ``(X, y)`` after 0, 1, ..., n_stages stages."""
    X = _as_matrix(X, model.n_features)
    y = np.asarray(y, dtype=float)
    fitted = np.full(y.size, model.initial_value)
    out = [np.mean((y - fitted) ** 2)]
    for tree, rate in zip(model.trees, model.learn_rates):
        fitted = fitted + rate * tree.predict(X)
        out.append(np.mean((y - fitted) ** 2))
    return np.asarray(out)


# --------------------------------------------------------------------------
# Split statistics
# --------------------------------------------------------------------------

SPLIT_COLUMNS = ["tree_id", "node_id", "depth", "feature_index", "feature", "threshold",
                 "n_samples", "variance_reduction"]


def export_split_stats(model, feature_names: Sequence[str] | None = None) -> pd.DataFrame:
    """One row per internal node of every tree.

    ``variance_reduction`` is the node MSE minus the size-weighted MSE of its
    two children, the quantity the split maximized.
    """
    if isinstance(model, RegressionTree):
        trees = [model]
    else:
        trees = model.trees
    if feature_names is None:
        feature_names = model.meta.get("feature_names") if hasattr(model, "meta") else None
    records = []
    for tid, t in enumerate(trees):
        for i in np.flatnonzero(t.feature != LEAF):
            l, r = t.left[i], t.right[i]
            n = t.n_samples[i]
            child = (t.n_samples[l] * t.mse[l] + t.n_samples[r] * t.mse[r]) / n
            f = int(t.feature[i])
            records.append((tid, int(i), int(t.depth[i]), f,
                            feature_names[f] if feature_names is not None else f"x{f}",
                            float(t.threshold[i]), int(n), float(t.mse[i] - child)))
    return pd.DataFrame.from_records(records, columns=SPLIT_COLUMNS)


def feature_split_summary(stats: pd.DataFrame) -> pd.DataFrame:
    """Per-feature split counts, shallowest depth and sample-weighted reduction."""
    if stats.empty:
        return pd.DataFrame(columns=["feature_index", "feature", "n_splits", "min_depth",
                                     "root_splits", "weighted_reduction"])
    g = stats.assign(weighted=stats.variance_reduction * stats.n_samples,
                     is_root=stats.depth == 0).groupby(["feature_index", "feature"], sort=True)
    out = g.agg(n_splits=("tree_id", "size"), min_depth=("depth", "min"),
                root_splits=("is_root", "sum"), weighted_reduction=("weighted", "sum"))
    return out.reset_index().sort_values("weighted_reduction", ascending=False, kind="stable")


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def save_model(model, path) -> Path:
    """Write a forest or boosted model to a self-describing ``.npz`` file."""
    path = Path(path)
    if isinstance(model, RandomForestModel):
        header = dict(kind="random_forest", n_features=model.n_features)
    elif isinstance(model, LSBoostModel):
        header = dict(kind="lsboost", n_features=model.n_features,
                      initial_value=model.initial_value, learn_rates=model.learn_rates,
                      train_mse=model.train_mse)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    header.update(format_version=FORMAT_VERSION, params=model.params, meta=model.meta,
                  node_counts=[t.node_count for t in model.trees])
    arrays = {}
    for name in _NODE_FIELDS:
        parts = [getattr(t, name) for t in model.trees]
        arrays[name] = np.concatenate(parts) if parts else np.empty(0)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_model(path):
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise InvalidDataError(f"unsupported model format {header.get('format_version')}")
        arrays = {name: data[name] for name in _NODE_FIELDS}
    trees, start = [], 0
    for count in header["node_counts"]:
        sl = slice(start, start + count)
        trees.append(RegressionTree(
            feature=arrays["feature"][sl].astype(np.int64),
            threshold=arrays["threshold"][sl].astype(float),
            left=arrays["left"][sl].astype(np.int64),
            right=arrays["right"][sl].astype(np.int64),
            value=arrays["value"][sl].astype(float),
            n_samples=arrays["n_samples"][sl].astype(np.int64),
            mse=arrays["mse"][sl].astype(float),
            depth=arrays["depth"][sl].astype(np.int64),
            n_features=header["n_features"],
        ))
        start += count
    if header["kind"] == "random_forest":
        return RandomForestModel(trees, header["n_features"], header["params"], header["meta"])
    return LSBoostModel(header["initial_value"], trees, header["learn_rates"],
                        header["n_features"], header["params"], header["train_mse"], header["meta"])
