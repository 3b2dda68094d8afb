"""Gradient-boosted regression trees with second-order (Newton) leaf weights.

Squared loss, so gradients are residuals and hessians are 1. Leaf weight is
``-T_alpha(G) / (H + lambda)`` where ``T_alpha`` soft-thresholds the gradient
sum by the L1 penalty. A split is kept only when its gain exceeds ``gamma``.
"""
import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@numba.njit(cache=True)
def _soft(g, alpha):
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


@numba.njit(cache=True)
def _score(g, h, lam, alpha):
    t = _soft(g, alpha)
    return t * t / (h + lam)


@numba.njit(cache=True)
def _grow(X, grad, hess, rows, cols, presorted, max_depth, min_child_weight, gamma, lam, alpha):
    """Exact greedy tree growth.

    ``presorted[f]`` lists all training rows in ascending order of feature
    ``f``. Each node owns the same ``[start, end)`` slice of every per-feature
    order, kept sorted by stable partitioning after each split, so split
    search never sorts.
    """
    n = rows.shape[0]
    n_all = X.shape[0]
    n_cols = cols.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    in_sample = np.zeros(n_all, dtype=np.bool_)
    for k in range(n):
        in_sample[rows[k]] = True
    order = np.empty((n_cols, n), dtype=np.int64)
    for c in range(n_cols):
        m = 0
        for r in presorted[cols[c]]:
            if in_sample[r]:
                order[c, m] = r
                m += 1
    goes_left = np.zeros(n_all, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)

    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        G = 0.0
        H = 0.0
        for k in range(start, end):
            G += grad[order[0, k]]
            H += hess[order[0, k]]
        value[node] = -_soft(G, alpha) / (H + lam) if H + lam > 0 else 0.0
        if depth >= max_depth or end - start < 2:
            continue
        parent = _score(G, H, lam, alpha)
        best_gain = gamma
        best_c = -1
        best_thr = 0.0
        for c in range(n_cols):
            f = cols[c]
            GL = 0.0
            HL = 0.0
            for k in range(start, end - 1):
                r = order[c, k]
                GL += grad[r]
                HL += hess[r]
                v0 = X[r, f]
                v1 = X[order[c, k + 1], f]
                if v1 <= v0:
                    continue
                HR = H - HL
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                gain = 0.5 * (_score(GL, HL, lam, alpha) + _score(G - GL, HR, lam, alpha) - parent)
                if gain > best_gain and gain > 1e-12 * (parent + 1e-300):
                    best_gain = gain
                    best_c = c
                    best_thr = 0.5 * (v0 + v1)
        if best_c < 0:
            continue
        best_f = cols[best_c]
        n_left = 0
        for k in range(start, end):
            r = order[0, k]
            goes_left[r] = X[r, best_f] < best_thr
            if goes_left[r]:
                n_left += 1
        for c in range(n_cols):
            a = start
            b = 0
            for k in range(start, end):
                r = order[c, k]
                if goes_left[r]:
                    order[c, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for k in range(b):
                order[c, a + k] = buf[k]
        mid = start + n_left
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = n_nodes + 1
        stack[top + 1, 1] = mid
        stack[top + 1, 2] = end
        stack[top + 1, 3] = depth + 1
        top += 2
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


class RegressionTree:
    """Flat-array tree: internal nodes have ``feature >= 0``."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def predict(self, X):
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in self.__slots__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class GradientBoostedRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=6, min_child_weight=1.0,
                 gamma=0.0, subsample=1.0, colsample_bytree=1.0, reg_alpha=0.0, reg_lambda=1.0,
                 random_state=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_child_weight = min_child_weight
        self.gamma = gamma
        self.subsample = subsample
        self.colsample_bytree = colsample_bytree
        self.reg_alpha = reg_alpha
        self.reg_lambda = reg_lambda
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0 < self.subsample <= 1 or not 0 < self.colsample_bytree <= 1:
            raise ValueError("subsample and colsample_bytree must be in (0, 1]")
        X = np.ascontiguousarray(X)
        n, d = X.shape
        rng = np.random.default_rng(self.random_state)
        self.base_score_ = float(y.mean())
        pred = np.full(n, self.base_score_)
        hess = np.ones(n)
        n_rows = max(1, int(round(self.subsample * n)))
        n_cols = max(1, int(round(self.colsample_bytree * d)))
        presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        self.trees_ = []
        for _ in range(int(self.n_estimators)):
            grad = pred - y
            rows = np.arange(n) if n_rows == n else np.sort(rng.choice(n, n_rows, replace=False))
            cols = np.arange(d) if n_cols == d else np.sort(rng.choice(d, n_cols, replace=False))
            tree = RegressionTree(*_grow(
                X, grad, hess, rows.astype(np.int64), cols.astype(np.int64), presorted, int(self.max_depth),
                float(self.min_child_weight), float(self.gamma), float(self.reg_lambda),
                float(self.reg_alpha),
            ))
            self.trees_.append(tree)
            pred = pred + self.learning_rate * tree.predict(X)
        self.n_features_in_ = d
        return self

    def staged_predict(self, X):
        """Yield predictions after 0, 1, ..., n_estimators trees."""
        check_is_fitted(self, "trees_")
        X = np.ascontiguousarray(check_array(X, dtype=float))
        pred = np.full(X.shape[0], self.base_score_)
        yield pred
        for tree in self.trees_:
            pred = pred + self.learning_rate * tree.predict(X)
            yield pred

    def predict(self, X, n_trees=None):
        check_is_fitted(self, "trees_")
        X = np.ascontiguousarray(check_array(X, dtype=float))
        pred = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_[: n_trees if n_trees is not None else len(self.trees_)]:
            pred = pred + self.learning_rate * tree.predict(X)
        return pred

    def to_dict(self):
        return {
            "params": self.get_params(),
            "base_score": self.base_score_,
            "n_features": self.n_features_in_,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d):
        obj = cls(**d["params"])
        obj.base_score_ = float(d["base_score"])
        obj.n_features_in_ = int(d["n_features"])
        obj.trees_ = [RegressionTree.from_dict(t) for t in d["trees"]]
        return obj
