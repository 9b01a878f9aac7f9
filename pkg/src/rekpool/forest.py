"""From-scratch random-forest regressor.

Bootstrap bagging, per-node feature subsampling, variance-reduction
splits with midpoint thresholds, out-of-bag R2 and permutation
importance.  Every random stream is derived from (seed, index) so a
refit with the same data and parameters is bit-identical, and trees
can be trained in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int | None = None  # None -> ceil(p / 3)
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")

    def resolved_features_per_split(self, p: int) -> int:
        k = self.features_per_split if self.features_per_split is not None else math.ceil(p / 3)
        return min(k, p)


@dataclass
class TreeNode:
    feature: int = -1        # -1 marks a leaf
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0
    n_rows: int = 0

    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf():
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> dict:
        if self.is_leaf():
            return {"value": self.value, "n": self.n_rows}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "TreeNode":
        if "feature" not in d:
            return TreeNode(value=float(d["value"]), n_rows=int(d["n"]))
        return TreeNode(feature=int(d["feature"]), threshold=float(d["threshold"]),
                        left=TreeNode.from_dict(d["left"]),
                        right=TreeNode.from_dict(d["right"]))


def _best_split(X, y, rows, candidates, min_leaf):
    """Best (feature, threshold, score) by variance reduction, or None.

    Ties are broken by lowest feature index then lowest threshold so the
    fit is deterministic regardless of candidate order.
    """
    best = None
    n = len(rows)
    y_sub = y[rows]
    total_sum = y_sub.sum()
    total_sq = (y_sub * y_sub).sum()
    nl = np.arange(1, n)
    nr = n - nl
    for f in sorted(int(c) for c in candidates):
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y_sub[order]
        csum = np.cumsum(ys)[:-1]
        csq = np.cumsum(ys * ys)[:-1]
        # split after index k (left gets k+1 rows); only where the value
        # actually changes and both sides keep min_leaf rows
        valid = xs[1:] > xs[:-1]
        valid[:min_leaf - 1] = False
        if min_leaf > 1:
            valid[len(valid) - (min_leaf - 1):] = False
        if not valid.any():
            continue
        sse = np.where(
            valid,
            (csq - csum * csum / nl) + ((total_sq - csq) - (total_sum - csum) ** 2 / nr),
            np.inf)
        k = int(np.argmin(sse))  # first minimum -> lowest threshold
        thr = 0.5 * (xs[k] + xs[k + 1])
        key = (float(sse[k]), f, float(thr))
        if best is None or key < best:
            best = key
    if best is None:
        return None
    base_sse = total_sq - total_sum * total_sum / n
    sse_best, f, thr = best
    if base_sse - sse_best <= 0.0:
        return None
    return f, thr


def _grow(X, y, rows, depth, params, k_features, rng):
    node = TreeNode(value=float(y[rows].mean()), n_rows=len(rows))
    if depth >= params.max_depth or len(rows) < 2 * params.min_leaf:
        return node
    p = X.shape[1]
    candidates = rng.choice(p, size=k_features, replace=False)
    split = _best_split(X, y, rows, candidates, params.min_leaf)
    if split is None:
        return node
    f, thr = split
    mask = X[rows, f] <= thr
    left_rows = rows[mask]
    right_rows = rows[~mask]
    if len(left_rows) < params.min_leaf or len(right_rows) < params.min_leaf:
        return node
    node.feature = int(f)
    node.threshold = float(thr)
    node.left = _grow(X, y, left_rows, depth + 1, params, k_features, rng)
    node.right = _grow(X, y, right_rows, depth + 1, params, k_features, rng)
    return node


def _tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(node, np.arange(len(X)))]
    while stack:
        nd, idx = stack.pop()
        if len(idx) == 0:
            continue
        if nd.is_leaf():
            out[idx] = nd.value
            continue
        mask = X[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


@dataclass
class RandomForestModel:
    trees: list
    bootstrap_indices: list          # per-tree row indices, for OOB bookkeeping
    params: ForestParams
    feature_names: tuple
    n_train_rows: int
    oob_r2: float | None             # None when undefined (constant target)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        preds = np.zeros(len(X))
        for t in self.trees:
            preds += _tree_predict(t, X)
        return preds / len(self.trees)

    def predict_one(self, x) -> float:
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])

    def features_used(self) -> set:
        used = set()
        stack = list(self.trees)
        while stack:
            nd = stack.pop()
            if not nd.is_leaf():
                used.add(nd.feature)
                stack.append(nd.left)
                stack.append(nd.right)
        return used

    def to_dict(self) -> dict:
        return {
            "params": {"n_trees": self.params.n_trees, "max_depth": self.params.max_depth,
                       "min_leaf": self.params.min_leaf,
                       "features_per_split": self.params.features_per_split,
                       "seed": self.params.seed},
            "feature_names": list(self.feature_names),
            "n_train_rows": self.n_train_rows,
            "oob_r2": self.oob_r2,
            "bootstrap_indices": [[int(i) for i in idx] for idx in self.bootstrap_indices],
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "RandomForestModel":
        p = d["params"]
        return RandomForestModel(
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            bootstrap_indices=[np.array(idx, dtype=int) for idx in d["bootstrap_indices"]],
            params=ForestParams(n_trees=int(p["n_trees"]), max_depth=int(p["max_depth"]),
                                min_leaf=int(p["min_leaf"]),
                                features_per_split=p["features_per_split"],
                                seed=int(p["seed"])),
            feature_names=tuple(d["feature_names"]),
            n_train_rows=int(d["n_train_rows"]),
            oob_r2=d["oob_r2"])


def _fit_tree(X, y, params: ForestParams, tree_index: int):
    n, p = X.shape
    rng = np.random.default_rng(np.random.SeedSequence(
        [params.seed & 0xFFFFFFFFFFFFFFFF, tree_index]))
    boot = rng.integers(0, n, size=n)
    k = params.resolved_features_per_split(p)
    tree = _grow(X, y, boot.copy(), 0, params, k, rng)
    return tree, boot


def compute_oob_r2(trees, bootstraps, X, y) -> float | None:
    n = len(y)
    pred_sum = np.zeros(n)
    pred_cnt = np.zeros(n, dtype=int)
    for tree, boot in zip(trees, bootstraps):
        oob = np.ones(n, dtype=bool)
        oob[boot] = False
        if not oob.any():
            continue
        idx = np.flatnonzero(oob)
        pred_sum[idx] += _tree_predict(tree, X[idx])
        pred_cnt[idx] += 1
    covered = pred_cnt > 0
    if not covered.any():
        return None
    resid = y[covered] - pred_sum[covered] / pred_cnt[covered]
    ss_tot = float(((y[covered] - y[covered].mean()) ** 2).sum())
    if ss_tot == 0.0:
        return None  # constant target: R2 undefined
    return float(1.0 - (resid ** 2).sum() / ss_tot)


def fit(X, y, params: ForestParams, feature_names=None) -> RandomForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one target per row")
    if len(y) < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise ValueError("target column must be finite")
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
    trees = []
    bootstraps = []
    for t in range(params.n_trees):
        tree, boot = _fit_tree(X, y, params, t)
        trees.append(tree)
        bootstraps.append(boot)
    oob = compute_oob_r2(trees, bootstraps, X, y)
    return RandomForestModel(trees=trees, bootstrap_indices=bootstraps, params=params,
                             feature_names=tuple(feature_names),
                             n_train_rows=len(y), oob_r2=oob)


def permutation_importance(model: RandomForestModel, X, y, seed: int = 0,
                           n_repeats: int = 5) -> np.ndarray:
    """Mean MSE increase per feature under column permutation, clipped at 0."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) == 0:
        raise ValueError("dataset must be nonempty")
    base_mse = float(((model.predict(X) - y) ** 2).mean())
    p = X.shape[1]
    importances = np.zeros(p)
    used = model.features_used()
    for j in range(p):
        if j not in used:
            continue  # permuting an unused feature cannot change predictions
        deltas = []
        for r in range(n_repeats):
            rng = np.random.default_rng(np.random.SeedSequence(
                [seed & 0xFFFFFFFFFFFFFFFF, j, r]))
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(len(X)), j]
            mse = float(((model.predict(Xp) - y) ** 2).mean())
            deltas.append(mse - base_mse)
        importances[j] = max(0.0, float(np.mean(deltas)))
    return importances
