"""Supervised tree-recommendation baseline.

Each training row gets a tree-index label and the same network is fitted with
cross-entropy instead of REINFORCE.
"""
from __future__ import annotations

import numpy as np

from .bandit import TrainConfig, TrainReport, _score, episode_rewards, fit_loop, recommend_tree
from .data import Dataset, Standardization, Task
from .forest import RandomForest
from .policy import PolicyNet, grad_cross_entropy


def label_classification(rf: RandomForest, X, y, rng: np.random.Generator) -> np.ndarray:
    """Tree labels for classification rows.

    Among trees predicting ``y`` correctly, take the one whose leaf assigns
    ``y`` the largest vote fraction (lowest index on ties). Rows no tree gets
    right draw a uniform random tree from ``rng``, in row order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    preds = rf.per_tree_predictions(X)
    pos_frac = np.column_stack([t.leaf_positive_fraction(X) for t in rf.trees])
    vote_for_y = np.where(y[:, None] > 0, pos_frac, 1.0 - pos_frac)
    score = np.where(preds == y[:, None], vote_for_y, -np.inf)
    labels = np.argmax(score, axis=1)
    none_correct = ~np.isfinite(score.max(axis=1))
    labels[none_correct] = rng.integers(0, rf.n_trees, size=int(none_correct.sum()))
    return labels


def label_regression(rf: RandomForest, X, y) -> np.ndarray:
    """Index of the tree with the smallest squared error (lowest index on ties)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.argmin((rf.per_tree_predictions(X) - y[:, None]) ** 2, axis=1)


def label_samples(rf: RandomForest, ds: Dataset, rng: np.random.Generator) -> np.ndarray:
    if rf.task is Task.CLASSIFICATION:
        return label_classification(rf, ds.X, ds.y, rng)
    return label_regression(rf, ds.X, ds.y)


def train_supervised(rf: RandomForest, train: Dataset, validation: Dataset, stats: Standardization,
                     cfg: TrainConfig, labels: np.ndarray | None = None,
                     ) -> tuple[PolicyNet, TrainReport, np.ndarray]:
    """Fit the policy architecture to tree labels by cross-entropy.

    Uses the same optimizer, schedule, dropout and early stopping as the
    bandit trainer. The per-epoch ``mean_reward`` is the reward the batch's
    argmax choices would earn. Returns ``(net, report, labels)``.
    """
    task = rf.task
    label_seq, init_seq, loop_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    if labels is None:
        labels = label_samples(rf, train, np.random.default_rng(label_seq))
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (len(train),) or labels.min() < 0 or labels.max() >= rf.n_trees:
        raise ValueError("labels must hold one tree index in [0, B) per training row")
    net = PolicyNet.initialize(train.feature_count, rf.n_trees, cfg.hidden, cfg.dropout,
                               np.random.default_rng(init_seq))

    X_tr, y_tr = stats.apply(train.X), train.y
    P_tr = rf.per_tree_predictions(train.X)
    X_va, y_va = stats.apply(validation.X), validation.y
    P_va = rf.per_tree_predictions(validation.X)
    rows_va = np.arange(len(validation))

    def step(rows, adam, lr, rng):
        probs, cache = net.forward(X_tr[rows], train=True, rng=rng)
        _, grads = grad_cross_entropy(net, cache, labels[rows])
        adam.step(net, grads, lr)
        picks = np.argmax(probs, axis=1)
        return float(episode_rewards(task, P_tr[rows], y_tr[rows], picks).mean())

    def validate(current):
        idx = recommend_tree(current, X_va)
        return _score(task, P_va[rows_va, idx], y_va), np.bincount(idx, minlength=rf.n_trees)

    net, report = fit_loop(net, cfg, task, len(train), step, validate,
                           np.random.default_rng(loop_seq))
    return net, report, labels
