"""Metrics, selection histograms and the model comparison table."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bandit import recommend_tree
from .data import Task
from .policy import PolicyNet

COMPARISON_COLUMNS = ("model", "dataset", "metric_mean", "metric_std", "seeds")
MODEL_ORDER = ("contextual", "decision_tree", "supervised", "random_forest")


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ValueError("empty prediction vector")
    return p, t


def accuracy(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return float(np.mean(p == t))


def rmse(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def task_metric(task: Task, preds, targets) -> float:
    return accuracy(preds, targets) if Task(task) is Task.CLASSIFICATION else rmse(preds, targets)


def selection_histogram(net: PolicyNet, X_std) -> np.ndarray:
    """How often each tree is recommended over the rows of ``X_std``."""
    idx = np.atleast_1d(recommend_tree(net, np.atleast_2d(X_std)))
    return np.bincount(idx, minlength=net.n_actions)


def top_k_share(counts, k: int = 3) -> float:
    c = np.sort(np.asarray(counts))[::-1]
    return float(c[:k].sum() / c.sum())


@dataclass
class ModelResult:
    model: str
    dataset: str
    values: list[float]
    seeds: list[int] | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def median(self) -> float:
        return float(statistics.median(self.values))

    @property
    def std(self) -> float | None:
        # deterministic models (single run) carry no spread
        return float(np.std(self.values)) if self.seeds else None


def compare_models(dataset: str, task: Task, targets,
                   predictions: Mapping[str, Sequence | Mapping[int, Sequence]]) -> list[ModelResult]:
    """Score every model on the same test targets.

    ``predictions`` maps a model name to either one prediction vector
    (deterministic model) or ``{seed: prediction vector}``.
    """
    names = [m for m in MODEL_ORDER if m in predictions] + \
        [m for m in predictions if m not in MODEL_ORDER]
    results = []
    for name in names:
        pred = predictions[name]
        if isinstance(pred, Mapping):
            seeds = sorted(pred)
            values = [task_metric(task, pred[s], targets) for s in seeds]
            results.append(ModelResult(name, dataset, values, seeds))
        else:
            results.append(ModelResult(name, dataset, [task_metric(task, pred, targets)]))
    return results


def comparison_csv(results: Sequence[ModelResult]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in results:
        std = "" if r.std is None else repr(r.std)
        seeds = "" if r.seeds is None else ";".join(str(s) for s in r.seeds)
        w.writerow([r.model, r.dataset, repr(r.mean), std, seeds])
    return out.getvalue()


def format_table(results: Sequence[ModelResult], metric: str) -> str:
    rows = [("model", metric)]
    for r in results:
        cell = f"{r.mean:.4f}" if r.std is None else f"{r.mean:.4f} +/- {r.std:.4f}"
        rows.append((r.model, cell))
    width = max(len(a) for a, _ in rows)
    return "\n".join(f"{a:<{width}}  {b}" for a, b in rows)
