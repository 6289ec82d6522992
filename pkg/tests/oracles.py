"""Reference implementations used only by the tests.

They share no code with the package: the tree oracle enumerates every cut
with exact rational Gini arithmetic, and the loss oracle re-implements the
network forward pass with plain numpy.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# --- greedy tree oracle -------------------------------------------------

def _gini_exact(labels):
    n = len(labels)
    pos = sum(1 for v in labels if v > 0)
    p = Fraction(pos, n)
    return 1 - p * p - (1 - p) * (1 - p)


def _var(values):
    m = sum(values) / len(values)
    return sum((v - m) ** 2 for v in values) / len(values)


def oracle_split(X, y, task):
    """Enumerate every (feature, midpoint) cut; return the best or None."""
    n, p = len(y), len(X[0])
    imp = _gini_exact if task == "classification" else _var
    parent = imp(y)
    cands = []
    for j in range(p):
        vals = sorted(set(row[j] for row in X))
        for lo, hi in zip(vals, vals[1:]):
            t = lo + (hi - lo) / 2.0
            left = [y[i] for i in range(n) if X[i][j] <= t]
            right = [y[i] for i in range(n) if X[i][j] > t]
            w = (len(left) * imp(left) + len(right) * imp(right)) / n
            cands.append((parent - w, j, t))
    if not cands:
        return None
    if task == "classification":
        g_max = max(c[0] for c in cands)
        if g_max <= 0:
            return None
        best = min((j, t) for g, j, t in cands if g == g_max)
    else:
        g_max = max(c[0] for c in cands)
        tol = 1e-12 * max(1.0, abs(parent))
        if g_max <= tol:
            return None
        best = min((j, t) for g, j, t in cands if g >= g_max - tol)
    return best


def oracle_leaf(y, task):
    if task == "classification":
        pos = sum(1 for v in y if v > 0)
        return 1.0 if 2 * pos > len(y) else -1.0
    return sum(y) / len(y)


def oracle_fit(X, y, max_depth, task, depth=0):
    """Nested tuples: ('leaf', value) or ('split', j, t, left, right)."""
    if depth >= max_depth or len(y) < 2:
        return ("leaf", oracle_leaf(y, task))
    found = oracle_split(X, y, task)
    if found is None:
        return ("leaf", oracle_leaf(y, task))
    j, t = found
    L = [i for i in range(len(y)) if X[i][j] <= t]
    R = [i for i in range(len(y)) if X[i][j] > t]
    return ("split", j, t,
            oracle_fit([X[i] for i in L], [y[i] for i in L], max_depth, task, depth + 1),
            oracle_fit([X[i] for i in R], [y[i] for i in R], max_depth, task, depth + 1))


def oracle_predict(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] <= node[2] else node[4]
    return node[1]


# --- loss oracles over raw parameter lists ------------------------------

def forward_logits(params, X):
    """Dense ReLU network without dropout; params = [W0, b0, W1, b1, ...]."""
    h = np.asarray(X, dtype=float)
    n_layers = len(params) // 2
    for k in range(n_layers):
        h = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def _log_probs(z):
    out = []
    for row in z:
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        out.append([v - lse for v in row])
    return out


def reinforce_objective(params, X, actions, rewards, beta):
    lp = _log_probs(forward_logits(params, X))
    total = 0.0
    for row, a, r in zip(lp, actions, rewards):
        H = -sum(math.exp(v) * v for v in row)
        total += row[a] * r + beta * H
    return -total / len(lp)


def cross_entropy_objective(params, X, labels):
    lp = _log_probs(forward_logits(params, X))
    return -sum(row[c] for row, c in zip(lp, labels)) / len(lp)


def central_differences(f, params, step=1e-5):
    grads = []
    for P in params:
        G = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + step
            up = f(params)
            P[idx] = old - step
            down = f(params)
            P[idx] = old
            G[idx] = (up - down) / (2 * step)
        grads.append(G)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def softmax_by_hand(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]
