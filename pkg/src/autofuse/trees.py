"""Decision trees, random forests, and softmax gradient boosting.

CART-style axis splits found by vectorized prefix scans. Everything is
deterministic given the seed: candidate features are visited in ascending
index order, a split must improve impurity by a strict margin to replace
the incumbent, and leaf-vote ties resolve toward the lower class index
(argmax semantics).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import ShapeMismatch
from .nn import cross_entropy, one_hot, softmax
from .validation import as_labels, as_matrix, check_min_classes, check_n_features

_IMPROVE_EPS = 1e-12


class _Tree:
    """Flat node arrays; feature -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(None)
        return len(self.feature) - 1

    def apply(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            go_left = X[rows, f[rows]] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])

    def values_matrix(self) -> np.ndarray:
        return np.stack(self.value)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": [v.tolist() for v in self.value],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        t = cls()
        t.feature = [int(v) for v in d["feature"]]
        t.threshold = [float(v) for v in d["threshold"]]
        t.left = [int(v) for v in d["left"]]
        t.right = [int(v) for v in d["right"]]
        t.value = [np.asarray(v, dtype=np.float64) for v in d["value"]]
        return t


def _best_split_classification(X, Y, rows, features, min_leaf):
    """Best (feature, threshold, weighted gini) over the candidate features."""
    n = len(rows)
    best = None
    parent_counts = Y[rows].sum(axis=0)
    parent_gini = n * (1.0 - float((parent_counts / n) @ (parent_counts / n)))
    best_score = parent_gini - _IMPROVE_EPS
    for j in features:
        vals = X[rows, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        boundaries = np.flatnonzero(sv[:-1] < sv[1:]) + 1
        if boundaries.size == 0:
            continue
        boundaries = boundaries[(boundaries >= min_leaf) & (boundaries <= n - min_leaf)]
        if boundaries.size == 0:
            continue
        counts = np.cumsum(Y[rows][order], axis=0)
        total = counts[-1]
        nl = boundaries.astype(np.float64)
        nr = n - nl
        cl = counts[boundaries - 1]
        cr = total - cl
        gini_l = nl - (cl * cl).sum(axis=1) / nl
        gini_r = nr - (cr * cr).sum(axis=1) / nr
        score = gini_l + gini_r
        k = int(np.argmin(score))
        if score[k] < best_score:
            best_score = float(score[k])
            cut = boundaries[k]
            best = (j, 0.5 * (sv[cut - 1] + sv[cut]))
    return best


def _best_split_regression(X, r, rows, features, min_leaf):
    n = len(rows)
    r_node = r[rows]
    total_sum = float(r_node.sum())
    total_sq = float((r_node * r_node).sum())
    parent_sse = total_sq - total_sum * total_sum / n
    best = None
    best_score = parent_sse - _IMPROVE_EPS
    for j in features:
        vals = X[rows, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        boundaries = np.flatnonzero(sv[:-1] < sv[1:]) + 1
        if boundaries.size == 0:
            continue
        boundaries = boundaries[(boundaries >= min_leaf) & (boundaries <= n - min_leaf)]
        if boundaries.size == 0:
            continue
        rs = np.cumsum(r_node[order])
        nl = boundaries.astype(np.float64)
        nr = n - nl
        sl = rs[boundaries - 1]
        sr = total_sum - sl
        # sse_l + sse_r minus the shared sum-of-squares term
        score = -(sl * sl) / nl - (sr * sr) / nr
        k = int(np.argmin(score))
        if score[k] + total_sq < best_score:
            best_score = float(score[k] + total_sq)
            cut = boundaries[k]
            best = (j, 0.5 * (sv[cut - 1] + sv[cut]))
    return best


def _candidate_features(p, max_features, rng):
    if max_features is None or max_features >= p or rng is None:
        return np.arange(p)
    return np.sort(rng.choice(p, size=max_features, replace=False))


def build_classification_tree(X, y, n_classes, max_depth=None, min_leaf=1, max_features=None, rng=None) -> _Tree:
    Y = one_hot(y, n_classes)
    tree = _Tree()
    root = tree.add_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    p = X.shape[1]
    while stack:
        node, rows, depth = stack.pop()
        counts = Y[rows].sum(axis=0)
        tree.value[node] = counts / counts.sum()
        pure = counts.max() == counts.sum()
        if pure or len(rows) < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        features = _candidate_features(p, max_features, rng)
        split = _best_split_classification(X, Y, rows, features, min_leaf)
        if split is None and len(features) < p:
            # sampled subset had no usable split; fall back to all features
            split = _best_split_classification(X, Y, rows, np.arange(p), min_leaf)
        if split is None:
            continue
        j, threshold = split
        mask = X[rows, j] <= threshold
        tree.feature[node] = int(j)
        tree.threshold[node] = float(threshold)
        left = tree.add_node()
        right = tree.add_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right, rows[~mask], depth + 1))
        stack.append((left, rows[mask], depth + 1))
    return tree


def build_regression_tree(X, residual, hessian, max_depth=3, min_leaf=1, leaf_clip=10.0) -> _Tree:
    """Squared-error splits with Newton-step leaf values (sum r / sum h)."""
    tree = _Tree()
    root = tree.add_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    p = X.shape[1]
    while stack:
        node, rows, depth = stack.pop()
        h_sum = float(hessian[rows].sum())
        value = float(residual[rows].sum()) / max(h_sum, 1e-8)
        tree.value[node] = np.array([np.clip(value, -leaf_clip, leaf_clip)])
        if len(rows) < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        split = _best_split_regression(X, residual, rows, np.arange(p), min_leaf)
        if split is None:
            continue
        j, threshold = split
        mask = X[rows, j] <= threshold
        tree.feature[node] = int(j)
        tree.threshold[node] = float(threshold)
        left = tree.add_node()
        right = tree.add_node()
        tree.left[node] = left
        tree.right[node] = right
        stack.append((right, rows[~mask], depth + 1))
        stack.append((left, rows[mask], depth + 1))
    return tree


class RandomForest(BaseEstimator, ClassifierMixin):
    """Averaged CART trees diversified by per-split feature subsampling.

    Bootstrap resampling is off by default so a single unlimited-depth tree
    memorizes distinct training points; enable it for classic bagging.
    """

    def __init__(
        self,
        n_trees=50,
        max_depth=None,
        min_leaf=1,
        max_features="sqrt",
        bootstrap=False,
        seed=0,
        n_classes=None,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_classes = n_classes

    def _resolve_max_features(self, p: int):
        if self.max_features is None:
            return None
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(p)))
        return max(1, min(int(self.max_features), p))

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_labels(y)
        if len(y) != X.shape[0]:
            raise ShapeMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
        observed = check_min_classes(y)
        C = self.n_classes if self.n_classes is not None else observed
        max_features = self._resolve_max_features(X.shape[1])
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(seeds[t])
            if self.bootstrap:
                rows = np.sort(rng.integers(0, len(y), size=len(y)))
                Xt, yt = X[rows], y[rows]
            else:
                Xt, yt = X, y
            self.trees_.append(
                build_classification_tree(
                    Xt, yt, C,
                    max_depth=self.max_depth,
                    min_leaf=self.min_leaf,
                    max_features=max_features,
                    rng=rng,
                )
            )
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(C)
        return self

    def predict_proba(self, X):
        X = as_matrix(X)
        check_n_features(X, self.n_features_in_)
        out = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.trees_:
            out += tree.values_matrix()[tree.apply(X)]
        return out / len(self.trees_)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "random_forest",
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "n_classes": len(self.classes_),
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        model = cls(**d["params"])
        model.trees_ = [_Tree.from_dict(t) for t in d["trees"]]
        model.n_features_in_ = int(d["n_features"])
        model.classes_ = np.arange(int(d["n_classes"]))
        return model


class GradientBoosting(BaseEstimator, ClassifierMixin):
    """Softmax boosting with one Newton regression tree per class per round.

    Each round's update is accepted only if the training log-loss does not
    increase, halving the step up to ten times and skipping the round
    otherwise, so the loss history is non-increasing by construction.
    """

    def __init__(self, n_rounds=50, learning_rate=0.1, max_depth=3, min_leaf=1, n_classes=None):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_classes = n_classes

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_labels(y)
        if len(y) != X.shape[0]:
            raise ShapeMismatch(f"{X.shape[0]} rows vs {len(y)} labels")
        observed = check_min_classes(y)
        C = self.n_classes if self.n_classes is not None else observed
        n = len(y)
        Y = one_hot(y, C)
        priors = np.clip(Y.mean(axis=0), 1e-12, None)
        self.init_score_ = np.log(priors)
        F = np.tile(self.init_score_, (n, 1))
        self.rounds_ = []
        self.loss_history_ = [cross_entropy(softmax(F), y)]
        for _ in range(self.n_rounds):
            P = softmax(F)
            trees = []
            update = np.zeros_like(F)
            for c in range(C):
                residual = Y[:, c] - P[:, c]
                hessian = np.maximum(P[:, c] * (1.0 - P[:, c]), 1e-12)
                tree = build_regression_tree(
                    X, residual, hessian, max_depth=self.max_depth, min_leaf=self.min_leaf
                )
                trees.append(tree)
                update[:, c] = tree.values_matrix()[tree.apply(X), 0]
            scale = 1.0
            accepted = False
            for _ in range(10):
                candidate = F + self.learning_rate * scale * update
                loss = cross_entropy(softmax(candidate), y)
                if loss <= self.loss_history_[-1] + 1e-12:
                    F = candidate
                    self.rounds_.append((trees, scale))
                    self.loss_history_.append(loss)
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                self.loss_history_.append(self.loss_history_[-1])
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(C)
        return self

    def decision_function(self, X):
        X = as_matrix(X)
        check_n_features(X, self.n_features_in_)
        F = np.tile(self.init_score_, (X.shape[0], 1))
        for trees, scale in self.rounds_:
            for c, tree in enumerate(trees):
                F[:, c] += self.learning_rate * scale * tree.values_matrix()[tree.apply(X), 0]
        return F

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "gradient_boosting",
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "n_classes": len(self.classes_),
            "init_score": self.init_score_.tolist(),
            "rounds": [
                {"scale": scale, "trees": [t.to_dict() for t in trees]}
                for trees, scale in self.rounds_
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoosting":
        model = cls(**d["params"])
        model.init_score_ = np.asarray(d["init_score"], dtype=np.float64)
        model.rounds_ = [
            ([_Tree.from_dict(t) for t in r["trees"]], float(r["scale"])) for r in d["rounds"]
        ]
        model.n_features_in_ = int(d["n_features"])
        model.classes_ = np.arange(int(d["n_classes"]))
        return model
