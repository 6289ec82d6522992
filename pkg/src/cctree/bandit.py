"""Contextual bandit over forest trees: rewards, REINFORCE updates, training
with early stopping, and argmax tree recommendation."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset, Standardization, Task
from .forest import RandomForest
from .policy import Adam, CosineSchedule, PolicyNet, grad_batch, sample_action
from .tree import DecisionPath

log = logging.getLogger(__name__)


def reward_classification(predicted, y):
    """+1 where the chosen tree's label matches ``y``, -1 otherwise."""
    out = np.where(np.asarray(predicted) == np.asarray(y), 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


def reward_regression(chosen_sq_err: float, all_sq_errs) -> float:
    """1 - 2d with d the chosen error min-max normalized over the forest.

    When every tree has the same error, d = 0 and the reward is +1.
    """
    errs = np.asarray(all_sq_errs, dtype=float)
    lo, hi = errs.min(), errs.max()
    if hi == lo:
        return 1.0
    d = (chosen_sq_err - lo) / (hi - lo)
    return float(1.0 - 2.0 * d)


def regression_rewards(sq_errs: np.ndarray, actions) -> np.ndarray:
    """Row-wise :func:`reward_regression` for an (n, B) squared-error matrix."""
    a = np.asarray(actions, dtype=int)
    lo, hi = sq_errs.min(axis=1), sq_errs.max(axis=1)
    span = hi - lo
    chosen = sq_errs[np.arange(sq_errs.shape[0]), a]
    d = np.divide(chosen - lo, span, out=np.zeros_like(span), where=span > 0)
    return 1.0 - 2.0 * d


def episode_rewards(task: Task, tree_preds: np.ndarray, y: np.ndarray, actions) -> np.ndarray:
    """Reward of each sampled action given the (n, B) per-tree prediction matrix."""
    a = np.asarray(actions, dtype=int)
    if task is Task.CLASSIFICATION:
        return reward_classification(tree_preds[np.arange(a.size), a], y)
    return regression_rewards((tree_preds - y[:, None]) ** 2, a)


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 2000
    entropy_coeff: float = 1e-4
    patience: int = 100
    seed: int = 0
    learning_rate: float = 1e-3
    min_lr: float = 0.0
    hidden: tuple = (64, 64)
    dropout: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    val_metric: float
    lr: float
    selection: np.ndarray


@dataclass
class TrainReport:
    metric: str
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("nan")

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    def reward_curve_rows(self) -> list[dict]:
        return [{"epoch": e.epoch, "mean_reward": e.mean_reward, "val_metric": e.val_metric,
                 "lr": e.lr} for e in self.epochs]

    def selection_rows(self) -> list[dict]:
        return [{"epoch": e.epoch, "tree_index": i, "count": int(c)}
                for e in self.epochs for i, c in enumerate(e.selection)]


def metric_name(task: Task) -> str:
    return "accuracy" if task is Task.CLASSIFICATION else "rmse"


def _score(task: Task, preds: np.ndarray, y: np.ndarray) -> float:
    if task is Task.CLASSIFICATION:
        return float(np.mean(preds == y))
    return float(np.sqrt(np.mean((preds - y) ** 2)))


def _better(task: Task, new: float, old: float) -> bool:
    if np.isnan(old):
        return True
    return new > old if task is Task.CLASSIFICATION else new < old


def recommend_tree(net: PolicyNet, X_std):
    """Index of the most probable tree (eval mode; ties go to the lowest index)."""
    x = np.asarray(X_std, dtype=float)
    idx = np.argmax(net.logits(np.atleast_2d(x)), axis=1)
    return int(idx[0]) if x.ndim == 1 else idx


def policy_update(net: PolicyNet, adam: Adam, X_std: np.ndarray, tree_preds: np.ndarray,
                  y: np.ndarray, task: Task, lr: float, entropy_coeff: float,
                  rng: np.random.Generator) -> float:
    """One policy-update step on a batch; returns the batch's mean reward.

    Samples one tree per row from the train-mode policy, scores it against
    ``y`` using the precomputed per-tree predictions, and takes a single Adam
    step on the entropy-regularized REINFORCE loss.
    """
    probs, cache = net.forward(X_std, train=True, rng=rng)
    actions = sample_action(probs, rng)
    rewards = episode_rewards(Task(task), tree_preds, y, actions)
    _, grads = grad_batch(net, cache, actions, rewards, entropy_coeff)
    adam.step(net, grads, lr)
    return float(rewards.mean())


def fit_loop(net: PolicyNet, cfg: TrainConfig, task: Task, n_train: int,
             step: Callable[[np.ndarray, Adam, float, np.random.Generator], float],
             validate: Callable[[PolicyNet], tuple[float, np.ndarray]],
             rng: np.random.Generator) -> tuple[PolicyNet, TrainReport]:
    """Epoch loop shared by the bandit and supervised trainers.

    ``step(batch_rows, adam, lr, rng)`` performs one update and returns the
    batch's mean reward; ``validate(net)`` returns (metric, selection counts).
    The best-validation checkpoint is returned.
    """
    adam = Adam(net)
    schedule = CosineSchedule(cfg.max_epochs, cfg.learning_rate, cfg.min_lr)
    report = TrainReport(metric_name(task))
    best = net.copy()
    for epoch in range(cfg.max_epochs):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(n_train)
        rewards, sizes = [], []
        for start in range(0, n_train, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            rewards.append(step(rows, adam, lr, rng))
            sizes.append(rows.size)
        mean_reward = float(np.average(rewards, weights=sizes))
        metric, selection = validate(net)
        report.epochs.append(EpochStats(epoch, mean_reward, metric, lr, selection))
        if _better(task, metric, report.best_metric):
            report.best_metric, report.best_epoch = metric, epoch
            best = net.copy()
        elif epoch - report.best_epoch >= cfg.patience:
            log.info("early stop at epoch %d (best %d: %s=%.5f)", epoch, report.best_epoch,
                     report.metric, report.best_metric)
            break
    return best, report


@dataclass
class ContextualTree:
    """A forest plus a tree-recommendation policy: one tree answers each query."""

    net: PolicyNet
    forest: RandomForest
    stats: Standardization

    def recommend(self, X_raw):
        return recommend_tree(self.net, self.stats.apply(X_raw))

    def predict(self, X_raw) -> tuple[np.ndarray, np.ndarray]:
        """Predictions and the recommended tree index for each row."""
        X = np.atleast_2d(np.asarray(X_raw, dtype=float))
        idx = np.atleast_1d(self.recommend(X))
        P = self.forest.per_tree_predictions(X)
        return P[np.arange(X.shape[0]), idx], idx

    def explain(self, x_raw) -> tuple[float, int, DecisionPath]:
        """``(prediction, tree_index, decision_path)`` for one raw sample."""
        return predict_contextual(self.net, self.forest, x_raw, self.stats)


def predict_contextual(net: PolicyNet, rf: RandomForest, x_raw,
                       stats: Standardization) -> tuple[float, int, DecisionPath]:
    """Recommend a tree on standardized features, then answer with that tree on raw ones."""
    x = np.asarray(x_raw, dtype=float)
    i = recommend_tree(net, stats.apply(x))
    tree = rf.trees[i]
    return float(tree.predict(x)), i, tree.decision_path(x)


def train_policy(rf: RandomForest, train: Dataset, validation: Dataset, stats: Standardization,
                 cfg: TrainConfig, net: PolicyNet | None = None) -> tuple[PolicyNet, TrainReport]:
    """Train the tree-recommendation policy with REINFORCE + entropy bonus.

    ``train`` and ``validation`` hold raw features: trees see them as is, the
    network sees them standardized with ``stats``. Validation accuracy / RMSE
    of the argmax contextual predictor drives early stopping.
    """
    task = rf.task
    if train.task is not task or validation.task is not task:
        raise ValueError("forest and datasets disagree on the task")
    if train.feature_count != rf.feature_count:
        raise ValueError(f"forest expects {rf.feature_count} features, data has {train.feature_count}")
    init_seq, loop_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if net is None:
        net = PolicyNet.initialize(train.feature_count, rf.n_trees, cfg.hidden, cfg.dropout,
                                   np.random.default_rng(init_seq))
    if net.n_actions != rf.n_trees:
        raise ValueError("policy output size differs from the number of trees")

    X_tr, y_tr = stats.apply(train.X), train.y
    P_tr = rf.per_tree_predictions(train.X)
    X_va, y_va = stats.apply(validation.X), validation.y
    P_va = rf.per_tree_predictions(validation.X)
    rows_va = np.arange(len(validation))

    def step(rows, adam, lr, rng):
        return policy_update(net, adam, X_tr[rows], P_tr[rows], y_tr[rows], task, lr,
                             cfg.entropy_coeff, rng)

    def validate(current):
        idx = recommend_tree(current, X_va)
        score = _score(task, P_va[rows_va, idx], y_va)
        return score, np.bincount(idx, minlength=rf.n_trees)

    return fit_loop(net, cfg, task, len(train), step, validate, np.random.default_rng(loop_seq))
