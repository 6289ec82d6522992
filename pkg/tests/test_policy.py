import math

import numpy as np
import pytest

from cctree.policy import (
    Adam,
    CosineSchedule,
    PolicyNet,
    StaleCacheError,
    entropy,
    grad_batch,
    grad_cross_entropy,
    reinforce_loss,
    sample_action,
    softmax,
)

import oracles


def _net(p=4, B=5, hidden=(6, 7), dropout=0.0, seed=0):
    net = PolicyNet.initialize(p, B, hidden, dropout, seed)
    # non-zero biases so their gradients are exercised too
    rng = np.random.default_rng(seed + 100)
    for b in net.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    return net


def test_zero_net_is_uniform():
    net = PolicyNet.zeros(3, 50)
    np.testing.assert_allclose(net.probabilities(np.ones(3)), 1 / 50, atol=1e-15)


def test_two_logit_softmax():
    np.testing.assert_allclose(softmax(np.array([math.log(2.0), 0.0])), [2 / 3, 1 / 3], atol=1e-15)


def test_softmax_matches_hand_computation():
    z = np.array([0.3, -1.2, 2.5, 0.0])
    np.testing.assert_allclose(softmax(z), oracles.softmax_by_hand(z.tolist()), atol=1e-15)


def test_outputs_on_simplex():
    net = PolicyNet.initialize(8, 50, seed=1)
    X = np.random.default_rng(0).normal(scale=5, size=(1000, 8))
    P = net.probabilities(X)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_shift_invariance():
    z = np.random.default_rng(1).normal(size=(20, 7))
    np.testing.assert_allclose(softmax(z + 123.4), softmax(z), atol=1e-12)


def test_entropy_bounds():
    assert entropy(np.full(10, 0.1)) == pytest.approx(math.log(10))
    assert entropy(np.eye(4)[2]) == 0.0
    P = softmax(np.random.default_rng(2).normal(size=(100, 6)))
    H = entropy(P)
    assert np.all(H >= 0) and np.all(H <= math.log(6) + 1e-12)


def test_sample_action_one_hot_and_frequency():
    rng = np.random.default_rng(0)
    assert all(sample_action(np.eye(5)[3], rng) == 3 for _ in range(50))
    a = sample_action(np.full((100_000, 50), 1 / 50), np.random.default_rng(5))
    assert abs(np.mean(a == 7) - 0.02) < 0.005
    assert a.min() >= 0 and a.max() < 50


def test_sample_action_deterministic():
    p = softmax(np.random.default_rng(3).normal(size=(40, 9)))
    a = sample_action(p, np.random.default_rng(11))
    b = sample_action(p, np.random.default_rng(11))
    np.testing.assert_array_equal(a, b)


def _fd_reinforce(net, X, actions, rewards, beta):
    _, cache = net.forward(X)
    loss, grads = grad_batch(net, cache, actions, rewards, beta)
    params = [p.copy() for p in net.params]
    assert loss == pytest.approx(oracles.reinforce_objective(params, X, actions, rewards, beta),
                                 rel=1e-10)
    numeric = oracles.central_differences(
        lambda ps: oracles.reinforce_objective(ps, X, actions, rewards, beta), params)
    return oracles.max_relative_error(grads, numeric)


@pytest.mark.parametrize("beta", [0.0, 1e-4, 0.5])
@pytest.mark.parametrize("seed", [0, 1])
def test_reinforce_gradient_matches_finite_differences(beta, seed):
    net = _net(seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(6, 4))
    actions = rng.integers(0, 5, size=6)
    rewards = rng.choice([-1.0, 1.0], size=6)
    assert _fd_reinforce(net, X, actions, rewards, beta) < 1e-5


def test_gradient_linear_policy():
    net = _net(hidden=())
    rng = np.random.default_rng(9)
    X = rng.normal(size=(5, 4))
    assert _fd_reinforce(net, X, rng.integers(0, 5, 5), rng.uniform(-1, 1, 5), 0.1) < 1e-5


def test_cross_entropy_gradient_matches_finite_differences():
    net = _net(seed=3)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(7, 4))
    labels = rng.integers(0, 5, size=7)
    _, cache = net.forward(X)
    loss, grads = grad_cross_entropy(net, cache, labels)
    params = [p.copy() for p in net.params]
    f = lambda ps: oracles.cross_entropy_objective(ps, X, labels)
    assert loss == pytest.approx(f(params), rel=1e-10)
    assert oracles.max_relative_error(grads, oracles.central_differences(f, params)) < 1e-5


def test_gradient_with_dropout_replays_masks():
    net = _net(dropout=0.3, seed=4)
    rng = np.random.default_rng(4)
    X = rng.normal(size=(6, 4))
    a, r = rng.integers(0, 5, 6), rng.choice([-1.0, 1.0], 6)

    def objective(_params):
        _, c = net.forward(X, train=True, rng=np.random.default_rng(77))
        return reinforce_loss(c.log_probs, a, r, 1e-3)

    _, cache = net.forward(X, train=True, rng=np.random.default_rng(77))
    assert any(m is not None and (m == 0).any() for m in cache.masks)
    _, grads = grad_batch(net, cache, a, r, 1e-3)
    numeric = oracles.central_differences(objective, net.params)
    assert oracles.max_relative_error(grads, numeric) < 1e-5


def test_zero_reward_zero_beta_gives_zero_gradient():
    net = _net()
    _, cache = net.forward(np.ones((3, 4)))
    _, grads = grad_batch(net, cache, [0, 1, 2], [0.0, 0.0, 0.0], 0.0)
    assert all(np.all(g == 0) for g in grads)


def test_entropy_term_pushes_towards_uniform():
    net = _net(hidden=())
    X = np.random.default_rng(0).normal(size=(10, 4))
    H0 = entropy(net.probabilities(X)).mean()
    adam = Adam(net)
    for _ in range(50):
        _, cache = net.forward(X)
        _, grads = grad_batch(net, cache, np.zeros(10, int), np.zeros(10), 1.0)
        adam.step(net, grads, 1e-2)
    assert entropy(net.probabilities(X)).mean() > H0


def test_stale_cache_rejected():
    net = _net()
    _, cache = net.forward(np.ones((2, 4)))
    _, grads = grad_batch(net, cache, [0, 1], [1.0, -1.0], 0.0)
    Adam(net).step(net, grads, 1e-3)
    with pytest.raises(StaleCacheError):
        grad_batch(net, cache, [0, 1], [1.0, -1.0], 0.0)


def test_adam_first_step():
    net = PolicyNet([np.array([[0.5]])], [np.array([0.0])], dropout=0.0)
    adam = Adam(net)
    adam.step(net, [np.array([[1.0]]), np.array([-3.0])], 1e-3)
    assert net.weights[0][0, 0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), abs=1e-15)
    assert net.biases[0][0] == pytest.approx(3e-3 / (3 + 1e-8), abs=1e-15)
    assert adam.t == 1 and net.version == 1


def test_adam_zero_gradient_keeps_params():
    net = _net()
    before = [p.copy() for p in net.params]
    adam = Adam(net)
    adam.step(net, [np.zeros_like(p) for p in net.params], 1e-2)
    for a, b in zip(before, net.params):
        np.testing.assert_array_equal(a, b)
    assert adam.t == 1


def test_cosine_schedule():
    s = CosineSchedule(2000, 1e-3)
    assert s.lr_at(0) == pytest.approx(1e-3)
    assert s.lr_at(1000) == pytest.approx(5e-4)
    assert s.lr_at(2000) == pytest.approx(0.0, abs=1e-18)
    lrs = [s.lr_at(e) for e in range(0, 2001, 50)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        s.lr_at(2001)


def test_init_is_seeded_and_round_trips():
    a = PolicyNet.initialize(5, 3, seed=8)
    b = PolicyNet.initialize(5, 3, seed=8)
    for x, y in zip(a.params, b.params):
        np.testing.assert_array_equal(x, y)
    assert all(np.all(bias == 0) for bias in a.biases)
    bound = math.sqrt(6 / 5)
    assert np.abs(a.weights[0]).max() <= bound
    c = PolicyNet.from_dict(a.to_dict())
    X = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_array_equal(c.probabilities(X), a.probabilities(X))


def test_eval_mode_ignores_dropout():
    net = _net(dropout=0.5)
    X = np.ones((3, 4))
    np.testing.assert_array_equal(net.probabilities(X), net.probabilities(X))
    with pytest.raises(ValueError):
        net.forward(X, train=True)
