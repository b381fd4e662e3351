"""A small Gini random forest used only for variable importance.

Categorical features split natively: at each node their categories are
ordered by positive rate and treated as an ordinal axis, so every candidate
split is a subset of categories.  Tree growth is compiled with numba; each
tree seeds numba's Mersenne Twister from its own ``SeedSequence`` child, so
importances are a pure function of (data, params, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    min_leaf: int = 5
    max_depth: int | None = None
    max_features: int | None = None  # None -> ceil(sqrt(P))
    bootstrap: bool = True

    def features_per_split(self, P: int) -> int:
        if self.max_features is None:
            return max(1, math.ceil(math.sqrt(P)))
        return max(1, min(P, self.max_features))


@njit(cache=True)
def _axis_values(X, rows, f, y, is_cat, n_cat):
    m = rows.shape[0]
    x = np.empty(m)
    for k in range(m):
        x[k] = X[rows[k], f]
    rank = np.zeros(0, np.int64)
    if is_cat[f]:
        c = n_cat[f]
        cnt = np.zeros(c)
        hits = np.zeros(c)
        for k in range(m):
            code = int(x[k])
            cnt[code] += 1.0
            hits[code] += y[rows[k]]
        rate = np.zeros(c)
        for j in range(c):
            if cnt[j] > 0:
                rate[j] = hits[j] / cnt[j]
        order = np.argsort(rate, kind="mergesort")
        rank = np.empty(c, np.int64)
        for j in range(c):
            rank[order[j]] = j
        for k in range(m):
            x[k] = rank[int(x[k])]
    return x, rank


@njit(cache=True)
def _best_split(x, yr, pos, min_leaf):
    m = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    parent = 2.0 * pos * (m - pos) / m
    best_gain = -np.inf
    best_i = -1
    pl = 0.0
    for i in range(m - 1):
        pl += yr[order[i]]
        nl = i + 1
        nr = m - nl
        if nl < min_leaf:
            continue
        if nr < min_leaf:
            break
        if not x[order[i]] < x[order[i + 1]]:
            continue
        pr = pos - pl
        child = 2.0 * (pl * (nl - pl) / nl + pr * (nr - pr) / nr)
        gain = parent - child
        if gain > best_gain:
            best_gain = gain
            best_i = i
    thr = np.nan
    if best_i >= 0:
        thr = 0.5 * (x[order[best_i]] + x[order[best_i + 1]])
    return best_gain, thr


@njit(cache=True)
def _grow(X, y, is_cat, n_cat, mtry, min_leaf, max_depth, seed):
    np.random.seed(seed)
    n, P = X.shape
    cap = 2 * n + 1
    max_cat = 1
    for f in range(P):
        if n_cat[f] > max_cat:
            max_cat = n_cat[f]
    feature = np.full(cap, -1, np.int64)
    threshold = np.full(cap, np.nan)
    left_set = np.zeros((cap, max_cat), np.bool_)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    importance = np.zeros(P)

    idx = np.arange(n)
    stack = np.empty((cap, 4), np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    value[0] = y.mean()
    feats = np.arange(P)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        rows = idx[start:end]
        pos = 0.0
        for k in range(m):
            pos += y[rows[k]]
        if m < 2 * min_leaf or pos == 0.0 or pos == m or (max_depth >= 0 and depth >= max_depth):
            continue
        # partial Fisher-Yates shuffle picks the candidate features
        for j in range(mtry):
            r = j + np.random.randint(0, P - j)
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp
        yr = np.empty(m)
        for k in range(m):
            yr[k] = y[rows[k]]
        best_gain = -np.inf
        best_f = -1
        best_thr = np.nan
        best_rank = np.zeros(0, np.int64)
        for j in range(mtry):
            f = feats[j]
            x, rank = _axis_values(X, rows, f, y, is_cat, n_cat)
            gain, thr = _best_split(x, yr, pos, min_leaf)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = thr
                best_rank = rank
        if best_f < 0 or not best_gain > 0.0:
            continue
        importance[best_f] += best_gain
        feature[node] = best_f
        threshold[node] = best_thr
        if is_cat[best_f]:
            for c in range(best_rank.shape[0]):
                left_set[node, c] = best_rank[c] <= best_thr
        # stable in-place partition: left block first
        buf = np.empty(m, np.int64)
        goes_left = np.empty(m, np.bool_)
        nl = 0
        for k in range(m):
            v = X[rows[k], best_f]
            if is_cat[best_f]:
                goes_left[k] = left_set[node, int(v)]
            else:
                goes_left[k] = v <= best_thr
            if goes_left[k]:
                nl += 1
        a = 0
        b = nl
        sl = 0.0
        for k in range(m):
            if goes_left[k]:
                buf[a] = rows[k]
                sl += y[rows[k]]
                a += 1
            else:
                buf[b] = rows[k]
                b += 1
        for k in range(m):
            idx[start + k] = buf[k]
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        value[lnode] = sl / nl
        value[rnode] = (pos - sl) / (m - nl)
        stack[top, 0] = rnode
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
    return (
        importance,
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left_set[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _predict(X, is_cat, feature, threshold, left_set, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            f = feature[node]
            v = X[r, f]
            if is_cat[f]:
                go_left = left_set[node, int(v)]
            else:
                go_left = v <= threshold[node]
            node = left[node] if go_left else right[node]
        out[r] = value[node]
    return out


class GiniTree:
    """One fitted tree stored as flat node arrays."""

    def __init__(self, nodes, is_categorical):
        (self.feature, self.threshold, self.left_set,
         self.left, self.right, self.value) = nodes
        self.is_categorical = is_categorical

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def predict_proba(self, X) -> np.ndarray:
        return _predict(np.asarray(X, dtype=np.float64), self.is_categorical, self.feature,
                        self.threshold, self.left_set, self.left, self.right, self.value)


class RandomForest:
    """Bagged Gini trees with mean-decrease-in-impurity importances.

    Per-tree importances are normalized to sum to one before averaging.
    """

    def __init__(self, params: ForestParams | None = None, seed: int = 0):
        self.params = params or ForestParams()
        self.seed = seed
        self.trees: list[GiniTree] = []
        self.feature_importances_: np.ndarray | None = None

    def fit(self, X, y, is_categorical=None, n_categories=None) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        n, P = X.shape
        if is_categorical is None:
            is_categorical = np.zeros(P, dtype=bool)
        is_categorical = np.asarray(is_categorical, dtype=np.bool_)
        if n_categories is None:
            n_categories = np.where(
                is_categorical, X.max(axis=0, initial=0).astype(np.int64) + 1, 0
            )
        n_categories = np.asarray(n_categories, dtype=np.int64)
        mtry = self.params.features_per_split(P)
        max_depth = -1 if self.params.max_depth is None else self.params.max_depth
        total = np.zeros(P)
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.params.n_trees):
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, size=n) if self.params.bootstrap else np.arange(n)
            tree_seed = int(child.generate_state(1)[0])
            imp, *nodes = _grow(X[idx], y[idx], is_categorical, n_categories, mtry,
                                self.params.min_leaf, max_depth, tree_seed)
            s = imp.sum()
            if s > 0:
                total += imp / s
            self.trees.append(GiniTree(nodes, is_categorical))
        self.feature_importances_ = total / self.params.n_trees
        return self

    def predict_proba(self, X) -> np.ndarray:
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)
