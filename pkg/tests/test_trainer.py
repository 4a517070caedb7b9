import csv
import io
import warnings

import numpy as np
import pytest

from lvr.data import Dataset
from lvr.loss import LossConfig, total_loss_and_grad
from lvr.policy import init_params, standardization
from lvr.trainer import TrainConfig, TrainingDivergedError, history_csv_text, train


def _data(seed=0, t=30, n=4, m=2):
    r = np.random.default_rng(seed)
    x = np.cumsum(r.normal(size=(t, n)), axis=0) * 0.3
    u = np.sin(x @ r.normal(size=(n, m)))
    return Dataset(x, u, 0.02)


def _small(**kw):
    base = dict(epochs=40, hidden=(16, 16), k=6, cap=8, learning_rate=3e-3)
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    assert TrainConfig().loss_config() == LossConfig()


def test_same_seed_gives_identical_history():
    data = _data()
    a = train(data, _small(seed=3, lam=0.5))
    b = train(data, _small(seed=3, lam=0.5))
    assert [(r.l_bc, r.l_kl, r.total) for r in a.history] == [(r.l_bc, r.l_kl, r.total) for r in b.history]
    assert all(np.array_equal(p, q) for p, q in zip(a.net.params(), b.net.params()))
    c = train(data, _small(seed=4, lam=0.5))
    assert c.history[0].total != a.history[0].total


def test_history_length_and_finiteness():
    data = _data(1)
    res = train(data, _small(epochs=25))
    assert len(res.history) == 25
    assert all(np.isfinite(r.l_bc) and np.isfinite(r.l_kl) for r in res.history)


def test_lambda_zero_is_behavior_cloning():
    # independent Adam loop on the BC gradient alone
    data = _data(2)
    cfg = _small(lam=0.0, seed=5, epochs=30)
    res = train(data, cfg)
    stats = standardization(data.states)
    net = init_params(cfg.seed, [data.state_dim, *cfg.hidden, data.action_dim], x_mean=stats[0], x_std=stats[1])
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    bc = LossConfig(lam=0.0)
    seen = []
    for t in range(1, cfg.epochs + 1):
        rep, g = total_loss_and_grad(net, data, res.graph, bc, report_kl=False)
        seen.append(rep.l_bc)
        for p, gi, mi, vi in zip(params, g.arrays(), m, v):
            mi[:] = 0.9 * mi + 0.1 * gi
            vi[:] = 0.999 * vi + 0.001 * gi * gi
            p -= cfg.learning_rate * (mi / (1 - 0.9 ** t)) / (np.sqrt(vi / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose([r.l_bc for r in res.history], seen, rtol=1e-10, atol=0)
    assert all(r.total == r.l_bc for r in res.history)
    assert all(r.l_kl >= 0 for r in res.history)


def test_small_step_descent_is_monotone():
    # near-linear network (large positive first-layer biases) and plain gradient descent
    data = _data(3)
    stats = standardization(data.states)
    net = init_params(0, [4, 8, 2], x_mean=stats[0], x_std=stats[1])
    net.biases[0][:] = 4.0
    cfg = TrainConfig(epochs=200, hidden=(8,), lam=0.0, optimizer="sgd", learning_rate=1e-4, k=6, cap=8)
    res = train(data, cfg, net=net)
    losses = np.array([r.l_bc for r in res.history])
    assert np.all(np.diff(losses) <= 0.0)
    assert losses[-1] < losses[0]


def test_best_checkpoint_not_worse_than_final():
    data = _data(4)
    for lam in (0.0, 0.3):
        cfg = _small(lam=lam, learning_rate=2e-2, epochs=60)
        res = train(data, cfg)
        best, _ = total_loss_and_grad(res.net, data, res.graph, cfg.loss_config(), need_grad=False)
        assert best.total <= res.history[-1].total
        assert best.total <= min(r.total for r in res.history)


def test_divergence_is_reported():
    data = _data(5)
    cfg = _small(optimizer="sgd", learning_rate=1e12, epochs=50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(TrainingDivergedError, match="learning rate"):
            train(data, cfg)


def test_needs_two_samples():
    with pytest.raises(ValueError):
        train(Dataset(np.zeros((1, 3)), np.zeros((1, 1)), 0.02), _small())


def test_history_csv():
    res = train(_data(6), _small(epochs=5))
    rows = list(csv.reader(io.StringIO(history_csv_text(res.history))))
    assert rows[0] == ["epoch", "l_bc", "l_kl", "total", "degenerate_edges"]
    assert len(rows) == 6
    assert float(rows[3][1]) == res.history[2].l_bc
