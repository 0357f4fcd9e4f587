"""Bagged regression-tree surrogate and the cross-validated NDScore.

Trees are grown to purity on squared error and stored as flat arrays so a
whole ensemble predicts in one compiled pass.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .metrics import nd_rank


@njit(cache=True)
def _grow_tree(X, y):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    # sorted[f, lo:hi] lists the node's samples ordered by feature f
    sorted_idx = np.empty((d, n), np.int64)
    for f in range(d):
        sorted_idx[f] = np.argsort(X[:, f], kind="mergesort")
    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)

    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_node[0], stack_lo[0], stack_hi[0] = 0, 0, n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, lo, hi = stack_node[top], stack_lo[top], stack_hi[top]
        m = hi - lo
        total = 0.0
        tot2 = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            yk = y[sorted_idx[0, k]]
            total += yk
            tot2 += yk * yk
            ymin = min(ymin, yk)
            ymax = max(ymax, yk)
        value[node] = total / m
        if m < 2 or ymax == ymin:
            continue
        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        for f in range(d):
            s = 0.0
            s2 = 0.0
            for k in range(lo, hi - 1):
                a = sorted_idx[f, k]
                b = sorted_idx[f, k + 1]
                yk = y[a]
                s += yk
                s2 += yk * yk
                xa = X[a, f]
                xb = X[b, f]
                if xa == xb:
                    continue
                nl = k - lo + 1
                nr = m - nl
                sr = total - s
                sse = (s2 - s * s / nl) + ((tot2 - s2) - sr * sr / nr)
                if best_f < 0 or sse < best_sse - 1e-12 * abs(best_sse):
                    best_sse = sse
                    best_f = f
                    thr = 0.5 * (xa + xb)
                    if thr >= xb:
                        thr = xa
                    best_thr = thr
        if best_f < 0:
            continue
        n_left = 0
        for k in range(lo, hi):
            a = sorted_idx[best_f, k]
            goes_left[a] = X[a, best_f] <= best_thr
            if goes_left[a]:
                n_left += 1
        mid = lo + n_left
        for f in range(d):
            li = lo
            ri = mid
            for k in range(lo, hi):
                a = sorted_idx[f, k]
                if goes_left[a]:
                    buf[li] = a
                    li += 1
                else:
                    buf[ri] = a
                    ri += 1
            for k in range(lo, hi):
                sorted_idx[f, k] = buf[k]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top], stack_lo[top], stack_hi[top] = n_nodes, lo, mid
        top += 1
        stack_node[top], stack_lo[top], stack_hi[top] = n_nodes + 1, mid, hi
        top += 1
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _predict_forest(X, roots, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    for r in range(roots.size):
        for k in range(n):
            node = roots[r]
            while left[node] >= 0:
                if X[k, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[k] += value[node]
    return out / roots.size


class TreeEnsemble:
    """Bagged fully grown regression trees for one scalar target."""

    def __init__(self, n_trees: int = 100, bootstrap: bool = True, seed: int = 0):
        self.n_trees = n_trees
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_features_ = None

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        n = len(X)
        self.tree_seeds_ = np.random.SeedSequence(self.seed).generate_state(self.n_trees)
        parts = []
        offset = 0
        roots = np.empty(self.n_trees, np.int64)
        for t, s in enumerate(self.tree_seeds_):
            if self.bootstrap:
                rows = np.random.default_rng(s).integers(n, size=n)
            else:
                rows = np.arange(n)
            f, thr, lft, rgt, val = _grow_tree(X[rows], y[rows])
            lft = np.where(lft >= 0, lft + offset, -1)
            rgt = np.where(rgt >= 0, rgt + offset, -1)
            parts.append((f, thr, lft, rgt, val))
            roots[t] = offset
            offset += len(f)
        self.roots_ = roots
        self.feature_, self.threshold_, self.left_, self.right_, self.value_ = (
            np.concatenate([p[i] for p in parts]) for i in range(5)
        )
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X):
        if self.n_features_ is None:
            raise RuntimeError("ensemble is not fitted")
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} features, got {X.shape[1]}")
        return _predict_forest(
            X, self.roots_, self.feature_, self.threshold_, self.left_, self.right_, self.value_
        )


class SurrogateModel:
    """One tree ensemble per objective column, mapping genes to objectives.

    Any object with the same ``fit(X, Y)`` / ``predict(X)`` pair can stand in.
    """

    def __init__(self, n_trees: int = 100, bootstrap: bool = True, seed: int = 0):
        self.n_trees = n_trees
        self.bootstrap = bootstrap
        self.seed = seed
        self.models_: list[TreeEnsemble] = []
        self.n_train_ = 0
        self.fit_count_ = 0

    def fit(self, X, Y) -> "SurrogateModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if len(X) < 2:
            raise ValueError("surrogate needs at least two training points")
        if len(X) != len(Y):
            raise ValueError("inputs and targets differ in length")
        seeds = np.random.SeedSequence(self.seed).generate_state(Y.shape[1])
        self.models_ = [
            TreeEnsemble(self.n_trees, self.bootstrap, int(s)).fit(X, Y[:, j])
            for j, s in enumerate(seeds)
        ]
        self.n_train_ = len(X)
        self.fit_count_ += 1
        return self

    def predict(self, X) -> np.ndarray:
        if not self.models_:
            raise RuntimeError("surrogate is not fitted")
        return np.column_stack([m.predict(X) for m in self.models_])


def fit_surrogate(X, Y, n_trees: int = 100, seed: int = 0, bootstrap: bool = True):
    return SurrogateModel(n_trees, bootstrap, seed).fit(X, Y)


class DegenerateFold(ValueError):
    """Kendall tau-b is undefined (too short, or one ranking fully tied)."""


def kendall_tau_b(r, r_hat) -> float:
    """Kendall tau-b with tie correction."""
    a = np.asarray(r, dtype=float)
    b = np.asarray(r_hat, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rank vectors must be 1-D and of equal length")
    if a.size < 2:
        raise DegenerateFold("need at least two ranks")
    iu = np.triu_indices(a.size, k=1)
    sa = np.sign(a[:, None] - a[None, :])[iu]
    sb = np.sign(b[:, None] - b[None, :])[iu]
    n_a = np.count_nonzero(sa)
    n_b = np.count_nonzero(sb)
    if n_a == 0 or n_b == 0:
        raise DegenerateFold("a ranking is entirely tied")
    return float(np.sum(sa * sb) / np.sqrt(float(n_a) * float(n_b)))


def nd_score(X, Y, k: int = 5, n_trees: int = 100, rng=None, model_factory=None) -> float:
    """Cross-validated agreement of true vs surrogate non-dominating ranks.

    ``Y`` holds minimization objectives.  Each fold scores
    ``(tau_b + 1) / 2`` between ranks of the true and predicted validation
    targets; tied-out folds are skipped and an all-degenerate split gives 0.5.
    ``k == 1`` validates on the training set itself.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    if k < 1 or n < 2 * k:
        raise ValueError(f"need at least {2 * k} points for {k} folds")
    rng = np.random.default_rng(rng)
    if model_factory is None:
        def model_factory(seed):
            return SurrogateModel(n_trees, True, seed)
    if k == 1:
        splits = [(np.arange(n), np.arange(n))]
    else:
        folds = np.array_split(rng.permutation(n), k)
        splits = [
            (np.concatenate([f for j, f in enumerate(folds) if j != i]), folds[i])
            for i in range(k)
        ]
    scores = []
    for train, valid in splits:
        model = model_factory(int(rng.integers(2**31 - 1))).fit(X[train], Y[train])
        r = nd_rank(Y[valid])
        r_hat = nd_rank(model.predict(X[valid]))
        try:
            scores.append((kendall_tau_b(r, r_hat) + 1.0) / 2.0)
        except DegenerateFold:
            continue
    return float(np.mean(scores)) if scores else 0.5
