"""Regression random forest built on exact-split CART trees.

The learner is written against presorted row indices (see _cart) and uses a
seed-derived random stream per tree, so a fit is reproducible bit for bit
whatever the worker count. Models serialize to a versioned JSON document.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from aqd._cart import accumulate_tree_predictions, grow_tree, seed_stream

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters; defaults follow common regression-forest practice."""

    n_trees: int = 200
    max_depth: int | None = None
    min_leaf: int = 2
    mtry: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")


class Tree(NamedTuple):
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class Forest:
    trees: tuple
    params: ForestParams
    feature_names: tuple
    oob_available: bool
    importances: np.ndarray

    def predict(self, X):
        return predict(self, X)

    def to_json(self):
        return to_json(self)


def _as_matrix(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    return X


def fit(X, y, params=None, feature_names=None, n_jobs=1):
    """Train a forest. Deterministic for a given (X, y, params)."""
    params = params or ForestParams()
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y length must match X rows")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValueError("X and y must be finite (no NaN or inf)")
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows, got {n}")
    mtry = params.mtry if params.mtry is not None else math.ceil(p / 3)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must be in [1, {p}], got {mtry}")
    params = replace(params, mtry=mtry)
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(p))
    else:
        feature_names = tuple(feature_names)
        if len(feature_names) != p:
            raise ValueError("feature_names length must match X columns")

    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)
    sse_tol = 1e-12 * max(1.0, float(np.abs(y).max())) ** 2
    max_depth = -1 if params.max_depth is None else params.max_depth
    seeds = seed_stream(params.seed, params.n_trees)

    def build(t):
        cap = 2 * n + 1
        feature = np.empty(cap, dtype=np.int64)
        threshold = np.empty(cap, dtype=np.float64)
        left = np.empty(cap, dtype=np.int64)
        right = np.empty(cap, dtype=np.int64)
        value = np.empty(cap, dtype=np.float64)
        count = np.empty(cap, dtype=np.int64)
        imp = np.zeros(p, dtype=np.float64)
        nodes = grow_tree(X, y, order, np.uint64(seeds[t]), mtry,
                          params.min_leaf, max_depth, params.bootstrap,
                          sse_tol, feature, threshold, left, right, value,
                          count, imp)
        tree = Tree(feature[:nodes].copy(), threshold[:nodes].copy(),
                    left[:nodes].copy(), right[:nodes].copy(),
                    value[:nodes].copy(), count[:nodes].copy())
        return tree, imp

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            built = list(pool.map(build, range(params.n_trees)))
    else:
        built = [build(t) for t in range(params.n_trees)]

    total_imp = np.zeros(p, dtype=np.float64)
    for _, imp in built:
        total_imp += imp
    mass = total_imp.sum()
    importances = total_imp / mass if mass > 0.0 else total_imp

    return Forest(trees=tuple(tree for tree, _ in built), params=params,
                  feature_names=feature_names,
                  oob_available=params.bootstrap, importances=importances)


def predict(forest, X):
    """Mean over per-tree leaf values, trees taken in index order."""
    X = _as_matrix(X)
    if X.shape[1] != len(forest.feature_names):
        raise ValueError(
            f"expected {len(forest.feature_names)} feature columns, "
            f"got {X.shape[1]}")
    out = np.zeros(X.shape[0], dtype=np.float64)
    for tree in forest.trees:
        accumulate_tree_predictions(tree.feature, tree.threshold, tree.left,
                                    tree.right, tree.value, X, out)
    out /= len(forest.trees)
    return out


def impurity_importance(forest):
    """Normalized split-gain mass per feature; zeros if no split exists."""
    return forest.importances.copy()


def _r2(y_true, y_pred):
    resid = y_true - y_pred
    total = y_true - y_true.mean()
    sst = float(total @ total)
    if sst == 0.0:
        raise ValueError("R^2 undefined for zero-variance target")
    return 1.0 - float(resid @ resid) / sst


def permutation_importance(forest, X, y, repeats=5, seed=0):
    """Mean R^2 drop per shuffled column. Deterministic for a given seed."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 10:
        raise ValueError("permutation importance needs at least 10 rows")
    baseline = _r2(y, predict(forest, X))
    rng = np.random.default_rng(seed)
    drops = np.zeros(p, dtype=np.float64)
    work = X.copy()
    for _ in range(repeats):
        for f in range(p):
            saved = work[:, f].copy()
            work[:, f] = saved[rng.permutation(n)]
            drops[f] += baseline - _r2(y, predict(forest, work))
            work[:, f] = saved
    return drops / repeats


def partial_dependence(forest, feature, grid, X_background):
    """PD curve for one feature, or surface for a (pair) of features.

    For a pair, `grid` may be a (grid_a, grid_b) pair or a single list used
    on both axes.
    """
    X_background = _as_matrix(X_background)
    if X_background.shape[0] < 1:
        raise ValueError("background matrix must have at least one row")
    p = len(forest.feature_names)

    if isinstance(feature, (tuple, list)):
        fa, fb = feature
        for f in (fa, fb):
            if not 0 <= f < p:
                raise ValueError(f"feature index {f} out of range")
        if (isinstance(grid, (tuple, list)) and len(grid) == 2
                and not np.isscalar(grid[0])):
            grid_a, grid_b = (np.asarray(g, dtype=np.float64) for g in grid)
        else:
            grid_a = grid_b = np.asarray(grid, dtype=np.float64)
        if grid_a.size == 0 or grid_b.size == 0:
            raise ValueError("grid must be nonempty")
        surface = np.empty((grid_a.size, grid_b.size), dtype=np.float64)
        work = X_background.copy()
        for i, va in enumerate(grid_a):
            work[:, fa] = va
            for j, vb in enumerate(grid_b):
                work[:, fb] = vb
                surface[i, j] = predict(forest, work).mean()
            work[:, fb] = X_background[:, fb]
        return surface

    if not 0 <= feature < p:
        raise ValueError(f"feature index {feature} out of range")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    curve = np.empty(grid.size, dtype=np.float64)
    work = X_background.copy()
    for i, v in enumerate(grid):
        work[:, feature] = v
        curve[i] = predict(forest, work).mean()
    return curve


def pearson_corr_matrix(X):
    """Correlation matrix; zero-variance columns yield NaN rows/columns."""
    X = _as_matrix(X)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    valid = norms > 0.0
    corr = np.full((p, p), np.nan, dtype=np.float64)
    if valid.any():
        cv = centered[:, valid]
        nv = norms[valid]
        block = (cv.T @ cv) / np.outer(nv, nv)
        np.clip(block, -1.0, 1.0, out=block)
        np.fill_diagonal(block, 1.0)
        corr[np.ix_(valid, valid)] = block
    return corr


def to_json(forest):
    doc = {
        "format_version": FORMAT_VERSION,
        "params": {
            "n_trees": forest.params.n_trees,
            "max_depth": forest.params.max_depth,
            "min_leaf": forest.params.min_leaf,
            "mtry": forest.params.mtry,
            "bootstrap": forest.params.bootstrap,
            "seed": forest.params.seed,
        },
        "feature_names": list(forest.feature_names),
        "oob_available": forest.oob_available,
        "importances": forest.importances.tolist(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "n": t.n.tolist(),
            }
            for t in forest.trees
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def from_json(text):
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version!r}")
    params = ForestParams(**doc["params"])
    trees = tuple(
        Tree(np.asarray(t["feature"], dtype=np.int64),
             np.asarray(t["threshold"], dtype=np.float64),
             np.asarray(t["left"], dtype=np.int64),
             np.asarray(t["right"], dtype=np.int64),
             np.asarray(t["value"], dtype=np.float64),
             np.asarray(t["n"], dtype=np.int64))
        for t in doc["trees"])
    return Forest(trees=trees, params=params,
                  feature_names=tuple(doc["feature_names"]),
                  oob_available=doc["oob_available"],
                  importances=np.asarray(doc["importances"],
                                         dtype=np.float64))
