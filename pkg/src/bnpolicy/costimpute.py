"""Treatment-cost imputation: linear and forest models picked by validation NMAE.

Only a subset of intervention units has observed installation costs; a
model trained on them predicts costs for the rest.  Candidate models are
scored by normalized mean absolute error on a held-out split, the winner
is refit on all labeled rows, and predictions are clipped at zero.

The regression forest is self-contained: bootstrap per tree, a random
feature subset per split, variance-reduction splitting, and node-purity
importance (summed SSE reduction per feature, averaged over trees).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, EstimationError
from .simlab import splitmix64

NMAE_DENOM_GUARD = 1e-12


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataValidationError("train_fraction must lie in (0, 1)")


def split_train_val(n_labeled: int, spec: SplitSpec):
    """Seeded shuffle split: first ceil(fraction * m) rows train, rest validate."""
    if n_labeled < 5:
        raise DataValidationError(f"need at least 5 labeled rows, got {n_labeled}")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n_labeled)
    n_train = math.ceil(spec.train_fraction * n_labeled)
    if n_train >= n_labeled:
        n_train = n_labeled - 1
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def nmae(actual, predicted) -> float:
    """Mean of |C - C_hat| / |C_hat|; the denominator is the prediction."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise DataValidationError("actual and predicted must have equal length")
    if np.any(np.abs(predicted) < NMAE_DENOM_GUARD):
        raise DataValidationError("zero prediction: NMAE undefined")
    return float(np.mean(np.abs(actual - predicted) / np.abs(predicted)))


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold=None, left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _best_split(x, y, features, min_leaf):
    """(feature, threshold, sse_reduction) of the best variance-reducing split."""
    n = y.shape[0]
    parent_sse = float(np.sum((y - y.mean()) ** 2))
    best = None
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys**2)
        total, total_sq = csum[-1], csq[-1]
        sizes = np.arange(1, n)
        left_sse = csq[:-1] - csum[:-1] ** 2 / sizes
        right_n = n - sizes
        right_sum = total - csum[:-1]
        right_sse = (total_sq - csq[:-1]) - right_sum**2 / right_n
        valid = (sizes >= min_leaf) & (right_n >= min_leaf) & (xs[:-1] < xs[1:])
        if not np.any(valid):
            continue
        red = parent_sse - (left_sse + right_sse)
        red[~valid] = -np.inf
        k = int(np.argmax(red))
        if red[k] <= 1e-12:
            continue
        threshold = 0.5 * (xs[k] + xs[k + 1])
        if best is None or red[k] > best[2]:
            best = (f, float(threshold), float(red[k]))
    return best


class RegressionTree:
    """Variance-reduction CART for regression, no depth cap."""

    def __init__(self, min_leaf=5, max_features=None, seed=0):
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.seed = seed
        self.root = None
        self.importance_ = None

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.importance_ = np.zeros(x.shape[1])
        rng = np.random.default_rng(self.seed)
        self.root = self._grow(x, y, rng)
        return self

    def _grow(self, x, y, rng):
        n, q = x.shape
        if n < 2 * self.min_leaf or np.all(y == y[0]):
            return _Node(value=float(y.mean()))
        k = self.max_features or q
        features = rng.choice(q, size=min(k, q), replace=False)
        best = _best_split(x, y, features, self.min_leaf)
        if best is None:
            return _Node(value=float(y.mean()))
        f, thr, red = best
        self.importance_[f] += red
        mask = x[:, f] <= thr
        return _Node(feature=f, threshold=thr,
                     left=self._grow(x[mask], y[mask], rng),
                     right=self._grow(x[~mask], y[~mask], rng))

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            node = self.root
            while node.value is None:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


class RegressionForest:
    """Bagged regression trees with per-tree derived seeds."""

    def __init__(self, n_trees=500, min_leaf=5, max_features=None, bootstrap=True,
                 seed=0):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[RegressionTree] = []
        self.importance_ = None

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n, q = x.shape
        max_features = self.max_features or max(1, math.ceil(q / 3))
        self.trees = []
        self.importance_ = np.zeros(q)
        for t in range(self.n_trees):
            tree_seed = splitmix64(self.seed, t)
            if self.bootstrap:
                idx = np.random.default_rng(splitmix64(tree_seed, 1)).integers(0, n, n)
            else:
                idx = np.arange(n)
            tree = RegressionTree(min_leaf=self.min_leaf, max_features=max_features,
                                  seed=tree_seed)
            tree.fit(x[idx], y[idx])
            self.trees.append(tree)
            self.importance_ += tree.importance_
        self.importance_ /= self.n_trees
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros(x.shape[0])
        for tree in self.trees:
            acc += tree.predict(x)
        return acc / len(self.trees)


class LinearModel:
    """Ordinary least squares with an intercept."""

    def __init__(self):
        self.coef = None

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        design = np.hstack([np.ones((x.shape[0], 1)), x])
        if design.shape[0] < design.shape[1]:
            raise EstimationError(
                f"too few labeled rows ({x.shape[0]}) for {design.shape[1]} "
                "linear parameters")
        self.coef, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=float), rcond=None)
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        return np.hstack([np.ones((x.shape[0], 1)), x]) @ self.coef


@dataclass(frozen=True)
class CostModelFit:
    model_kind: str
    model: object
    nmae_validation: float
    importance: np.ndarray | None


def fit_cost_models(x, c, spec: SplitSpec, n_trees=500, min_leaf=5):
    """Train candidates, pick the lower validation NMAE, refit on all rows.

    Returns (selected CostModelFit, leaderboard), where the leaderboard is
    the validation ranking as (kind, nmae) pairs ordered by (nmae, kind).
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.all(c == c[0]):
        raise EstimationError("constant cost target: nothing to model")
    train, val = split_train_val(c.shape[0], spec)

    candidates = {
        "linear": lambda: LinearModel(),
        "forest": lambda: RegressionForest(n_trees=n_trees, min_leaf=min_leaf,
                                           seed=splitmix64(spec.seed, 0xF0)),
    }
    scores = {}
    for kind, make in candidates.items():
        model = make().fit(x[train], c[train])
        scores[kind] = nmae(c[val], model.predict(x[val]))
    leaderboard = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))
    winner = leaderboard[0][0]
    final = candidates[winner]().fit(x, c)
    importance = final.importance_.copy() if winner == "forest" else None
    return (CostModelFit(model_kind=winner, model=final,
                         nmae_validation=scores[winner], importance=importance),
            leaderboard)


def predict_costs(fit: CostModelFit, x):
    """Predicted costs for unlabeled units, clipped below at zero.

    Returns (costs, n_clipped); a nonzero clip count is worth surfacing
    since negative fitted costs indicate extrapolation.
    """
    x = np.asarray(x, dtype=float)
    raw = fit.model.predict(x)
    clipped = np.clip(raw, 0.0, None)
    return clipped, int(np.sum(raw < 0.0))
