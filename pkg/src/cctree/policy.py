"""Softmax policy network over tree indices, with hand-written backprop.

The network is ``p -> h1 -> h2 -> B``: dense layers with ReLU on the hidden
activations, inverted dropout after each hidden activation in train mode, and
a softmax head.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1
DEFAULT_HIDDEN = (64, 64)
DEFAULT_DROPOUT = 0.2


class StaleCacheError(RuntimeError):
    """A forward cache was produced by parameters that have since changed."""


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) along the last axis; 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: list            # pre-activations per layer
    act: list            # post-ReLU (and post-dropout) inputs to the next layer
    masks: list          # scaled dropout masks, or None in eval mode
    logits: np.ndarray
    probs: np.ndarray
    log_probs: np.ndarray
    version: int


class PolicyNet:
    """Dense softmax network; ``weights[k]`` has shape (fan_in, fan_out)."""

    def __init__(self, weights, biases, dropout: float = DEFAULT_DROPOUT):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        for k, (W, b) in enumerate(zip(weights, biases)):
            if W.shape[1] != b.shape[0]:
                raise ValueError(f"layer {k}: weight/bias shape mismatch")
            if k and weights[k - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {k}: input width does not chain")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.dropout = float(dropout)
        self.version = 0

    @classmethod
    def initialize(cls, n_inputs: int, n_actions: int, hidden=DEFAULT_HIDDEN,
                   dropout: float = DEFAULT_DROPOUT, seed: int | np.random.Generator = 0):
        """He-style uniform init (bound sqrt(6 / fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        sizes = [n_inputs, *hidden, n_actions]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, dropout)

    @classmethod
    def zeros(cls, n_inputs: int, n_actions: int, hidden=DEFAULT_HIDDEN,
              dropout: float = DEFAULT_DROPOUT):
        sizes = [n_inputs, *hidden, n_actions]
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]], dropout)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "PolicyNet":
        net = PolicyNet([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.dropout)
        net.version = self.version
        return net

    def forward(self, X, train: bool = False, rng: np.random.Generator | None = None):
        """Return ``(probs, cache)`` for a batch (or a single row).

        Train mode draws dropout masks (keep prob ``1 - dropout``, scaled by
        its inverse) from ``rng`` and records them in the cache.
        """
        x = np.asarray(X, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} features, got {h.shape[1]}")
        use_dropout = train and self.dropout > 0.0
        if use_dropout and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")
        keep = 1.0 - self.dropout
        pre, act, masks = [], [h], []
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            if k == last:
                break
            h = np.maximum(z, 0.0)
            if use_dropout:
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
            else:
                mask = None
            masks.append(mask)
            act.append(h)
        logits = pre[-1]
        log_probs = log_softmax(logits)
        probs = np.exp(log_probs)
        cache = ForwardCache(act[0], pre, act, masks, logits, probs, log_probs,
                             self.version)
        return (probs[0] if single else probs), cache

    def probabilities(self, X) -> np.ndarray:
        return self.forward(X, train=False)[0]

    def logits(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)
        z = self.forward(x, train=False)[1].logits
        return z[0] if x.ndim == 1 else z

    def backward(self, cache: ForwardCache, dlogits: np.ndarray) -> list[np.ndarray]:
        """Gradients (same order as :attr:`params`) given dL/dlogits."""
        if cache.version != self.version:
            raise StaleCacheError(
                f"cache from parameter version {cache.version}, net is at {self.version}")
        grads = [None] * (2 * len(self.weights))
        delta = dlogits
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = cache.act[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k == 0:
                break
            delta = delta @ self.weights[k].T
            if cache.masks[k - 1] is not None:
                delta = delta * cache.masks[k - 1]
            delta = delta * (cache.pre[k - 1] > 0)
        return grads

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "policy_net",
            "dropout": self.dropout,
            "shapes": [list(W.shape) for W in self.weights],
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyNet":
        if d.get("kind") != "policy_net":
            raise ValueError("document is not a policy network")
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported policy format version {d.get('format_version')}")
        weights = [np.asarray(W, dtype=float).reshape(s) for W, s in zip(d["weights"], d["shapes"])]
        biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return cls(weights, biases, float(d["dropout"]))


def sample_action(probs, rng: np.random.Generator):
    """Categorical draw by inverse CDF: one uniform variate per row."""
    p = np.asarray(probs, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])
    idx = (cdf <= u[:, None]).sum(axis=1)
    idx = np.minimum(idx, p.shape[1] - 1)
    return int(idx[0]) if single else idx


def reinforce_loss(log_probs: np.ndarray, actions, rewards, entropy_coeff: float) -> float:
    """-(1/N) sum_i [log pi(a_i | x_i) r_i + beta H(pi(. | x_i))]."""
    lp = np.atleast_2d(log_probs)
    a = np.asarray(actions, dtype=int).reshape(-1)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    chosen = lp[np.arange(lp.shape[0]), a]
    H = entropy(np.exp(lp))
    return float(-np.mean(chosen * r + entropy_coeff * H))


def grad_batch(net: PolicyNet, cache: ForwardCache, actions, rewards, entropy_coeff: float):
    """Loss and exact gradient of the REINFORCE + entropy objective.

    ``cache`` must come from ``net.forward`` on the batch (its dropout masks
    are replayed). Returns ``(loss, grads)``.
    """
    a = np.asarray(actions, dtype=int).reshape(-1)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    p, lp = cache.probs, cache.log_probs
    n = p.shape[0]
    if a.shape[0] != n or r.shape[0] != n:
        raise ValueError("actions/rewards must have one entry per cached row")
    onehot = np.zeros_like(p)
    onehot[np.arange(n), a] = 1.0
    H = entropy(p)
    # d log pi_a / dz = e_a - p ;  dH / dz = -p (log p + H)
    dlogits = -(r[:, None] * (onehot - p) - entropy_coeff * p * (lp + H[:, None])) / n
    loss = reinforce_loss(lp, a, r, entropy_coeff)
    return loss, net.backward(cache, dlogits)


def cross_entropy_loss(log_probs: np.ndarray, labels) -> float:
    lp = np.atleast_2d(log_probs)
    y = np.asarray(labels, dtype=int).reshape(-1)
    return float(-np.mean(lp[np.arange(lp.shape[0]), y]))


def grad_cross_entropy(net: PolicyNet, cache: ForwardCache, labels):
    """Loss and gradient of mean cross-entropy against integer tree labels."""
    y = np.asarray(labels, dtype=int).reshape(-1)
    p = cache.probs
    n = p.shape[0]
    onehot = np.zeros_like(p)
    onehot[np.arange(n), y] = 1.0
    return cross_entropy_loss(cache.log_probs, y), net.backward(cache, (p - onehot) / n)


class Adam:
    """Bias-corrected Adam without weight decay."""

    def __init__(self, net: PolicyNet, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]
        self.t = 0

    def step(self, net: PolicyNet, grads, lr: float) -> None:
        """Update ``net`` in place and bump its parameter version."""
        params = net.params
        if len(grads) != len(params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        net.version += 1


@dataclass(frozen=True)
class CosineSchedule:
    """Single-cycle cosine annealing from ``initial_lr`` to ``min_lr``."""

    total_epochs: int
    initial_lr: float = 1e-3
    min_lr: float = 0.0

    def lr_at(self, epoch: int) -> float:
        if not 0 <= epoch <= self.total_epochs:
            raise ValueError(f"epoch {epoch} outside [0, {self.total_epochs}]")
        if self.total_epochs == 0:
            return self.initial_lr
        cos = math.cos(math.pi * epoch / self.total_epochs)
        return self.min_lr + 0.5 * (self.initial_lr - self.min_lr) * (1.0 + cos)
