"""Random forest over binary features, used as the real-vs-synthetic distinguisher.

Trees are CART with Gini impurity. Features are 0/1 so a split needs no
threshold: rows with the feature off go left, on go right. Trees are grown
breadth first, one whole level per vectorized pass.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .errors import InputError


@dataclass(frozen=True)
class ForestSettings:
    n_trees: int = 200
    max_depth: Optional[int] = None
    min_leaf: int = 1
    features_per_split: Union[int, str] = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise InputError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError(f"max_depth must be >= 0, got {self.max_depth}")
        fps = self.features_per_split
        if isinstance(fps, str):
            if fps != "sqrt":
                raise InputError(f"features_per_split must be a count or 'sqrt', got {fps!r}")
        elif fps < 1:
            raise InputError(f"features_per_split must be >= 1, got {fps}")

    def n_candidates(self, d: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(np.sqrt(d)))
        return min(int(self.features_per_split), d)

    def describe(self) -> str:
        depth = "none" if self.max_depth is None else self.max_depth
        return (
            f"forest(n_trees={self.n_trees};max_depth={depth};"
            f"min_leaf={self.min_leaf};features_per_split={self.features_per_split})"
        )


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # fraction of positive labels reaching the node
    depth: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        node = np.zeros(x.shape[0], dtype=np.intp)
        for _ in range(self.depth):
            f = self.feature[node]
            live = np.flatnonzero(f >= 0)
            if live.size == 0:
                break
            on = x[live, f[live]] == 1
            cur = node[live]
            node[live] = np.where(on, self.right[cur], self.left[cur])
        return self.value[node]


def tree_seeds(seed: int, n_trees: int):
    return np.random.SeedSequence(seed).spawn(n_trees)


def fit_tree(x: np.ndarray, y: np.ndarray, settings: ForestSettings, seed) -> Tree:
    """Grow one tree on a bootstrap resample drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x)
    n, d = x.shape
    boot = rng.integers(0, n, n)
    xs = x[boot].astype(np.float32)
    ys = np.asarray(y)[boot].astype(np.float32)
    n_cand = settings.n_candidates(d)
    min_leaf = settings.min_leaf
    max_depth = np.inf if settings.max_depth is None else settings.max_depth

    feature, left, right, value = [], [], [], []
    xs_pos = xs * ys[:, None]
    rows = np.arange(n)
    local = np.zeros(n, dtype=np.intp)  # node index within the current level
    n_level = 1
    n_nodes = 0  # nodes in earlier levels
    depth = 0
    while rows.size:
        # per-node count sums as a product with a sparse node-indicator matrix
        member = sparse.csr_matrix(
            (np.ones(rows.size, dtype=np.float32), (local, rows)), shape=(n_level, n)
        )
        counts = np.bincount(local, minlength=n_level)
        pos = np.bincount(local, weights=ys[rows], minlength=n_level)
        ones = member @ xs
        ones_pos = member @ xs_pos
        value.append(pos / counts)

        splittable = (counts >= 2 * min_leaf) & (pos > 0) & (pos < counts) & (depth < max_depth)
        off = counts[:, None] - ones
        ok = (ones >= min_leaf) & (off >= min_leaf) & splittable[:, None]
        keys = rng.random(ok.shape)
        keys[~ok] = np.inf
        cand = np.argsort(keys, axis=1, kind="stable")[:, :n_cand]
        r = np.arange(n_level)[:, None]
        cand_ok = np.isfinite(keys[r, cand])
        c, c1 = ones[r, cand], ones_pos[r, cand]
        nl, nl1 = counts[:, None] - c, pos[:, None] - c1
        with np.errstate(divide="ignore", invalid="ignore"):
            impurity = nl1 * (nl - nl1) / nl + c1 * (c - c1) / c
        impurity[~cand_ok] = np.inf
        best = np.argmin(impurity, axis=1)
        split = cand_ok.any(axis=1)

        # children of this level get consecutive ids, left then right
        lvl_feature = np.where(split, cand[np.arange(n_level), best], -1)
        n_split = int(split.sum())
        rank = np.cumsum(split) - 1
        child_left = np.where(split, n_nodes + n_level + 2 * rank, -1)
        child_right = np.where(split, child_left + 1, -1)
        feature.append(lvl_feature)
        left.append(child_left)
        right.append(child_right)

        keep = split[local]
        local = local[keep]
        rows = rows[keep]
        on = xs[rows, lvl_feature[local]] == 1
        local = 2 * rank[local] + on
        n_nodes += n_level
        n_level = 2 * n_split
        depth += 1

    feature = np.concatenate(feature)
    left = np.concatenate(left)
    right = np.concatenate(right)
    value = np.concatenate(value)
    return Tree(feature, left, right, value, depth)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    settings: ForestSettings

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        total = np.zeros(x.shape[0])
        for t in self.trees:
            total += t.predict_proba(x)
        return total / len(self.trees)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.predict_proba(x) > 0.5).astype(np.int8)


def fit_forest(x, y, settings: ForestSettings, n_jobs: int = 1) -> Forest:
    """Bagged trees; tree ``t`` uses the ``t``-th child of ``SeedSequence(settings.seed)``."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InputError(f"expected x of shape (n, d) and y of shape (n,), got {x.shape}, {y.shape}")
    labels = np.unique(y)
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    if labels.size < 2:
        raise InputError("training data contains a single class")
    seeds = tree_seeds(settings.seed, settings.n_trees)

    def grow(s):
        return fit_tree(x, y, settings, s)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = tuple(pool.map(grow, seeds))
    else:
        trees = tuple(grow(s) for s in seeds)
    return Forest(trees, settings)
