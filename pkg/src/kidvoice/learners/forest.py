"""CART trees with Gini splits and a bagged random forest over them."""

from __future__ import annotations

import math

import numpy as np

from .base import LabeledMatrix, Model, proba_pair, require_both_classes

LEAF = -1


class Tree:
    """Flat-array binary tree. ``feature[i] == LEAF`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, 2)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] != LEAF
        return node

    def vote(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.apply(X)]
        return (c[:, 1] > c[:, 0]).astype(np.int64)

    def to_nested(self, i: int = 0) -> dict:
        if self.feature[i] == LEAF:
            return {"counts": self.counts[i].tolist()}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "counts": self.counts[i].tolist(),
            "left": self.to_nested(int(self.left[i])),
            "right": self.to_nested(int(self.right[i])),
        }

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        cols = {"feature": [], "threshold": [], "left": [], "right": [], "counts": []}

        def visit(node):
            i = len(cols["feature"])
            for k in cols:
                cols[k].append(None)
            cols["counts"][i] = node["counts"]
            if "feature" not in node:
                cols["feature"][i], cols["threshold"][i] = LEAF, 0.0
                cols["left"][i] = cols["right"][i] = LEAF
                return i
            cols["feature"][i], cols["threshold"][i] = node["feature"], node["threshold"]
            cols["left"][i] = visit(node["left"])
            cols["right"][i] = visit(node["right"])
            return i

        visit(root)
        return cls(**cols)


def _best_split(Xs: np.ndarray, ys: np.ndarray, min_leaf: int):
    """Best Gini split over the columns of ``Xs``: (column, threshold, impurity) or None."""
    n = Xs.shape[0]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    kid = np.cumsum(ys[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    kid_right = ys.sum() - kid
    impurity = (2.0 * kid * (n_left - kid) / n_left + 2.0 * kid_right * (n_right - kid_right) / n_right) / n
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    pos, col = np.unravel_index(np.argmin(impurity), impurity.shape)
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return int(col), float(thr), float(impurity[pos, col])


def grow_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_features: int,
              min_leaf: int = 1, max_depth: int | None = None) -> Tree:
    """Grow one CART tree on (X, y) until leaves are pure or unsplittable."""
    d = X.shape[1]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        k = int(y[idx].sum())
        counts.append((idx.shape[0] - k, k))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        a, k = counts[node]
        if a == 0 or k == 0 or idx.shape[0] < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        perm = rng.permutation(d)
        split = None
        # fall through to further features only when the drawn ones are all constant
        for start in range(0, d, max_features):
            feats = perm[start : start + max_features]
            found = _best_split(X[np.ix_(idx, feats)], y[idx], min_leaf)
            if found is not None:
                split = (int(feats[found[0]]), found[1])
                break
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        li, ri = new_node(idx[mask]), new_node(idx[~mask])
        left[node], right[node] = li, ri
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return Tree(feature, threshold, left, right, counts)


class RandomForestModel(Model):
    model_kind = "random_forest"

    def __init__(self, trees, n_features, max_features, min_leaf, seed, standardization=None, oob_accuracy=None,
                 max_depth=None):
        self.trees = list(trees)
        self.n_features = int(n_features)
        self.max_features = int(max_features)
        self.min_leaf = int(min_leaf)
        self.max_depth = max_depth
        self.seed = int(seed)
        self.standardization = standardization
        self.oob_accuracy = oob_accuracy

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_rows) matrix of per-tree KID votes."""
        return np.array([t.vote(X) for t in self.trees])

    def _proba(self, X):
        kid_votes = self.votes(X).sum(axis=0)
        return proba_pair(kid_votes / self.n_trees)

    def params(self) -> dict:
        return {"trees": [t.to_nested() for t in self.trees], "oob_accuracy": self.oob_accuracy}

    def hyperparams(self) -> dict:
        return {"n_trees": self.n_trees, "max_features": self.max_features, "min_leaf": self.min_leaf,
                "max_depth": self.max_depth, "n_features": self.n_features}

    @classmethod
    def from_params(cls, params, hyper, seed, standardization):
        trees = [Tree.from_nested(t) for t in params["trees"]]
        return cls(trees, hyper["n_features"], hyper["max_features"], hyper["min_leaf"], seed, standardization,
                   params.get("oob_accuracy"), hyper.get("max_depth"))


def sqrt_features(d: int) -> int:
    return max(1, int(math.sqrt(d)))


def train_random_forest(train: LabeledMatrix, n_trees: int = 200, seed: int = 0, max_features: int | None = None,
                        min_leaf: int = 1, max_depth: int | None = None) -> RandomForestModel:
    """Bagged Gini trees, sqrt(d) candidate features per node by default.

    Tree ``i`` draws its bootstrap and feature subsets from its own
    generator seeded with ``(seed, i)``, so the forest does not depend on
    the order in which trees are built.
    """
    require_both_classes(train.labels)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y = train.features, train.labels
    n, d = X.shape
    mf = sqrt_features(d) if max_features is None else max(1, min(int(max_features), d))
    trees = []
    oob_votes = np.zeros(n)
    oob_seen = np.zeros(n)
    for i in range(n_trees):
        rng = np.random.default_rng([seed, i])
        boot = rng.integers(0, n, n)
        tree = grow_tree(X[boot], y[boot], rng, mf, min_leaf, max_depth)
        trees.append(tree)
        out = np.ones(n, dtype=bool)
        out[boot] = False
        if out.any():
            oob_votes[out] += tree.vote(X[out])
            oob_seen[out] += 1
    seen = oob_seen > 0
    oob = None
    if seen.any():
        pred = (oob_votes[seen] / oob_seen[seen] > 0.5).astype(np.int64)
        oob = float(np.mean(pred == y[seen]))
    return RandomForestModel(trees, d, mf, min_leaf, seed, train.standardization, oob, max_depth)
