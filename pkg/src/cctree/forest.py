"""Bagged forest of shallow trees. Tree order is fixed after fitting and is the
index space the tree-recommendation policy acts on."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Task
from .tree import DecisionTree, fit_tree

FORMAT_VERSION = 1


def default_feature_subsample(p: int, task: Task | str) -> int:
    """Per-node candidate features: ceil(sqrt(p)) for classification, all p
    for regression (the usual random-forest regressor default)."""
    if Task(task) is Task.CLASSIFICATION:
        return max(1, math.ceil(math.sqrt(p)))
    return p


def _majority(votes: np.ndarray) -> np.ndarray:
    # ties resolve to -1
    return np.where(votes.sum(axis=-1) > 0, 1.0, -1.0)


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    task: Task
    feature_count: int
    feature_subsample_size: int
    max_depth: int
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.task = Task(self.task)
        if not self.trees:
            raise ValueError("a forest needs at least one tree")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def per_tree_predictions(self, X) -> np.ndarray:
        """Predictions of every tree; column ``i`` is ``trees[i]``.

        A 1-D input gives a length-B vector, a matrix gives (n, B).
        """
        x = np.asarray(X, dtype=float)
        P = np.column_stack([t.predict(np.atleast_2d(x)) for t in self.trees])
        return P[0] if x.ndim == 1 else P

    def vote_fractions(self, X, label: float = 1.0) -> np.ndarray:
        """Fraction of trees voting ``label`` (classification only)."""
        if self.task is not Task.CLASSIFICATION:
            raise ValueError("vote fractions need a classification forest")
        return np.mean(self.per_tree_predictions(X) == label, axis=-1)

    def aggregate(self, per_tree: np.ndarray) -> np.ndarray:
        if self.task is Task.CLASSIFICATION:
            return _majority(per_tree)
        return per_tree.mean(axis=-1)

    def predict(self, X):
        out = self.aggregate(self.per_tree_predictions(X))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "random_forest",
            "task": self.task.value,
            "feature_count": self.feature_count,
            "feature_subsample_size": self.feature_subsample_size,
            "max_depth": self.max_depth,
            "n_trees": self.n_trees,
            "seed": self.seed,
            "config": self.config,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        if d.get("kind") != "random_forest":
            raise ValueError("document is not a random forest")
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {d.get('format_version')}")
        trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        if len(trees) != d["n_trees"]:
            raise ValueError("tree count does not match n_trees")
        return cls(trees, Task(d["task"]), int(d["feature_count"]),
                   int(d["feature_subsample_size"]), int(d["max_depth"]), d.get("seed"),
                   d.get("config", {}))


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n, size=n)


def fit_forest(
    X,
    y,
    n_trees: int,
    max_depth: int,
    seed: int,
    task: Task | str,
    feature_subsample: int | None = None,
    n_jobs: int = 1,
) -> RandomForest:
    """Fit ``n_trees`` trees, each on a bootstrap resample of the rows.

    Every tree gets its own generator spawned from ``seed`` before any work is
    dispatched, so ``n_jobs > 1`` yields the same forest as a sequential fit.
    """
    task = Task(task)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot fit a forest on zero samples")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, p = X.shape
    k = default_feature_subsample(p, task) if feature_subsample is None else feature_subsample
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_trees)]

    def grow(rng: np.random.Generator) -> DecisionTree:
        rows = bootstrap_indices(n, rng)
        return fit_tree(X[rows], y[rows], max_depth, task, k, rng)

    if n_jobs == 1:
        trees = [grow(r) for r in rngs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            trees = list(pool.map(grow, rngs))
    return RandomForest(trees, task, p, k, max_depth, seed)
