"""Depth-capped CART trees: Gini for classification, variance for regression."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .data import Task

MAX_SUPPORTED_DEPTH = 4
# Gains closer than this (relative to the parent impurity) count as ties.
GAIN_TIE_TOL = 1e-12


@dataclass
class Leaf:
    prediction: float
    n_samples: int
    impurity: float
    # Fraction of +1 labels among the training rows (None for regression).
    positive_fraction: float | None = None

    def vote_fraction(self, label: float) -> float:
        """Share of this leaf's training rows carrying ``label``."""
        if self.positive_fraction is None:
            raise ValueError("vote fractions are only defined for classification leaves")
        return self.positive_fraction if label > 0 else 1.0 - self.positive_fraction


@dataclass
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class Rule:
    feature: int
    threshold: float
    went_left: bool

    def holds(self, x) -> bool:
        return (x[self.feature] <= self.threshold) == self.went_left

    def render(self, feature_names: Sequence[str] | None = None) -> str:
        name = feature_names[self.feature] if feature_names else f"feature[{self.feature}]"
        op = "<=" if self.went_left else ">"
        return f"{name} {op} {self.threshold:.6g}"


@dataclass
class DecisionPath:
    rules: list[Rule]
    prediction: float

    def __len__(self) -> int:
        return len(self.rules)

    def replay(self, x) -> float:
        """Check every rule against ``x`` and return the leaf prediction."""
        for rule in self.rules:
            if not rule.holds(x):
                raise ValueError(f"sample violates rule {rule.render()}")
        return self.prediction

    def render(self, feature_names: Sequence[str] | None = None) -> str:
        lines = [r.render(feature_names) for r in self.rules]
        lines.append(f"=> predict {self.prediction:.6g}")
        return "\n".join(lines)


def impurity(targets, task: Task | str) -> float:
    """Gini index (classification, labels in {-1, +1}) or population variance."""
    y = np.asarray(targets, dtype=float)
    if y.size == 0:
        raise ValueError("impurity of an empty target list")
    if Task(task) is Task.CLASSIFICATION:
        p = np.mean(y > 0)
        return float(1.0 - p * p - (1.0 - p) ** 2)
    return float(np.var(y))


def _leaf(y: np.ndarray, task: Task) -> Leaf:
    if task is Task.CLASSIFICATION:
        frac = float(np.mean(y > 0))
        # majority ties resolve to -1
        pred = 1.0 if frac > 0.5 else -1.0
        return Leaf(pred, int(y.size), impurity(y, task), frac)
    return Leaf(float(np.mean(y)), int(y.size), impurity(y, task))


def _weighted_child_impurity(ys: np.ndarray, task: Task) -> np.ndarray:
    """Size-weighted child impurity for every cut ``ys[:i] | ys[i:]``, i = 1..n-1."""
    n = ys.size
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    if task is Task.CLASSIFICATION:
        pos = np.cumsum(ys > 0)[:-1].astype(float)
        total_pos = float(np.sum(ys > 0))
        pos_right = total_pos - pos
        g_left = 2.0 * pos * (n_left - pos) / n_left
        g_right = 2.0 * pos_right * (n_right - pos_right) / n_right
        return (g_left + g_right) / n
    yc = ys - ys.mean()
    s = np.cumsum(yc)[:-1]
    s2 = np.cumsum(yc * yc)[:-1]
    total, total2 = yc.sum(), float(np.dot(yc, yc))
    sse_left = s2 - s * s / n_left
    sse_right = (total2 - s2) - (total - s) ** 2 / n_right
    return np.maximum(sse_left + sse_right, 0.0) / n


def best_split(X, y, candidate_features: Sequence[int] | None, task: Task | str):
    """Best axis-aligned cut as ``(feature, threshold, gain)`` or ``None``.

    Thresholds are midpoints between consecutive distinct values. Ties go to
    the lowest feature index, then the lowest threshold.
    """
    task = Task(task)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2:
        return None
    features = range(X.shape[1]) if candidate_features is None else sorted(candidate_features)
    parent = impurity(y, task)
    tol = GAIN_TIE_TOL * max(1.0, abs(parent))
    best = None
    for j in features:
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        gains = parent - _weighted_child_impurity(ys, task)
        gains = np.where(valid, gains, -np.inf)
        g_max = gains.max()
        if g_max <= tol:
            continue
        # lowest threshold among near-maximal cuts of this feature
        i = int(np.flatnonzero(gains >= g_max - tol)[0])
        lo, hi = xs[i], xs[i + 1]
        thr = lo + (hi - lo) / 2.0
        if not lo <= thr < hi:
            thr = lo
        if best is None or g_max > best[2] + tol:
            best = (int(j), float(thr), float(g_max))
    return best


@dataclass
class DecisionTree:
    root: Node
    max_depth: int
    task: Task
    _compiled: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.task = Task(self.task)

    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def leaves(self) -> list[Leaf]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def _compile(self):
        # Flat arrays for vectorized routing; leaves carry feature -1.
        if self._compiled is None:
            feat, thr, left, right, pred, frac = [], [], [], [], [], []

            def add(node) -> int:
                k = len(feat)
                feat.append(-1); thr.append(0.0); left.append(k); right.append(k)
                if isinstance(node, Leaf):
                    pred.append(node.prediction)
                    frac.append(np.nan if node.positive_fraction is None else node.positive_fraction)
                    return k
                pred.append(np.nan); frac.append(np.nan)
                feat[k], thr[k] = node.feature, node.threshold
                left[k] = add(node.left)
                right[k] = add(node.right)
                return k

            add(self.root)
            self._compiled = tuple(np.asarray(a) for a in (feat, thr, left, right, pred, frac))
            self._depth = self.depth()
        return self._compiled

    def apply(self, X) -> np.ndarray:
        """Index (in compiled order) of the leaf each row lands in."""
        feat, thr, left, right, _, _ = self._compile()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        for _ in range(self._depth):
            f = feat[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= thr[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return node

    def predict(self, X) -> np.ndarray | float:
        """Route rows root-to-leaf (``<=`` goes left). A 1-D input returns a scalar."""
        x = np.asarray(X, dtype=float)
        out = self._compile()[4][self.apply(x)]
        return float(out[0]) if x.ndim == 1 else out

    def leaf_positive_fraction(self, X) -> np.ndarray:
        if self.task is not Task.CLASSIFICATION:
            raise ValueError("positive fractions are only defined for classification trees")
        return self._compile()[5][self.apply(X)]

    def decision_path(self, x) -> DecisionPath:
        x = np.asarray(x, dtype=float)
        rules, node = [], self.root
        while isinstance(node, Split):
            left = bool(x[node.feature] <= node.threshold)
            rules.append(Rule(node.feature, node.threshold, left))
            node = node.left if left else node.right
        return DecisionPath(rules, node.prediction)

    def to_dict(self) -> dict:
        def enc(node):
            if isinstance(node, Leaf):
                d = {"kind": "leaf", "prediction": node.prediction,
                     "n_samples": node.n_samples, "impurity": node.impurity}
                if node.positive_fraction is not None:
                    d["positive_fraction"] = node.positive_fraction
                return d
            return {"kind": "split", "feature": node.feature, "threshold": node.threshold,
                    "left": enc(node.left), "right": enc(node.right)}
        return {"max_depth": self.max_depth, "task": self.task.value, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        def dec(n):
            if n["kind"] == "leaf":
                return Leaf(float(n["prediction"]), int(n["n_samples"]), float(n["impurity"]),
                            n.get("positive_fraction"))
            if n["kind"] != "split":
                raise ValueError(f"unknown node kind {n['kind']!r}")
            return Split(int(n["feature"]), float(n["threshold"]), dec(n["left"]), dec(n["right"]))
        return cls(dec(d["root"]), int(d["max_depth"]), Task(d["task"]))


def fit_tree(
    X,
    y,
    max_depth: int,
    task: Task | str,
    feature_subsample: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow a tree greedily until the depth cap, fewer than 2 rows, or no
    positive-gain split.

    With ``feature_subsample`` set, each node draws that many candidate
    features uniformly without replacement from ``rng``.
    """
    task = Task(task)
    if not 1 <= max_depth <= MAX_SUPPORTED_DEPTH:
        raise ValueError(f"max_depth must be in [1, {MAX_SUPPORTED_DEPTH}], got {max_depth}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot fit a tree on zero samples")
    p = X.shape[1]
    if feature_subsample is not None:
        if not 1 <= feature_subsample <= p:
            raise ValueError(f"feature_subsample must be in [1, {p}]")
        if rng is None:
            raise ValueError("feature subsampling needs an rng")

    def grow(rows: np.ndarray, depth: int) -> Node:
        ys = y[rows]
        if depth >= max_depth or rows.size < 2:
            return _leaf(ys, task)
        if feature_subsample is None or feature_subsample == p:
            candidates = None
        else:
            candidates = rng.choice(p, size=feature_subsample, replace=False)
        found = best_split(X[rows], ys, candidates, task)
        if found is None:
            return _leaf(ys, task)
        j, thr, _ = found
        go_left = X[rows, j] <= thr
        return Split(j, thr, grow(rows[go_left], depth + 1), grow(rows[~go_left], depth + 1))

    return DecisionTree(grow(np.arange(y.size), 0), max_depth, task)
