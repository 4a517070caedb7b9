"""Full-batch training for behavior cloning (lam = 0) and LVR (lam > 0)."""

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import build_graph
from .loss import LossConfig, prepare_targets, total_loss_and_grad
from .policy import DEFAULT_HIDDEN, init_params, standardization

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    lam: float = 0.1
    tau: float = 0.1
    k: int = 32
    q: float = 0.8
    cap: int = 32
    hidden: tuple = DEFAULT_HIDDEN
    projection_mode: str = "row-space"
    stop_grad_projection: bool = True
    init_scheme: str = "glorot_uniform"
    log_every: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.hidden = tuple(int(h) for h in self.hidden)

    def loss_config(self):
        return LossConfig(tau=self.tau, lam=self.lam, projection_mode=self.projection_mode,
                          stop_grad_projection=self.stop_grad_projection)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    net: object
    history: list
    best_epoch: int
    seconds: float
    config: dict
    graph: object = field(default=None, repr=False)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(data, cfg, net=None, graph=None):
    """Train on one fixed dataset.

    The graph and the control-side distributions are built once before the
    loop. Returns the parameters with the lowest total loss seen (the loss
    of each epoch is measured before that epoch's update).
    With ``lam == 0`` the KL term is still evaluated (without gradient) so
    that BC and LVR histories are directly comparable.
    """
    if len(data) < 2:
        raise ValueError("dataset needs at least 2 samples")
    start = time.perf_counter()
    stats = standardization(data.states)
    if net is None:
        widths = [data.state_dim, *cfg.hidden, data.action_dim]
        net = init_params(cfg.seed, widths, cfg.init_scheme, x_mean=stats[0], x_std=stats[1])
    else:
        net = net.copy()
    if graph is None:
        graph = build_graph(data, k=cfg.k, q=cfg.q, cap=cfg.cap, stats=stats)
    targets = prepare_targets(data, graph, cfg.tau)
    loss_cfg = cfg.loss_config()

    params = net.params()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps) if cfg.optimizer == "adam" \
        else SGD(params, cfg.learning_rate)
    history = []
    best, best_total, best_epoch = None, np.inf, -1
    for epoch in range(cfg.epochs):
        report, grads = total_loss_and_grad(net, data, graph, loss_cfg, targets=targets)
        if not np.isfinite(report.total) or not all(np.all(np.isfinite(g)) for g in grads.arrays()):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (l_bc={report.l_bc}, l_kl={report.l_kl}); "
                "learning rate too high?"
            )
        history.append(report)
        if report.total < best_total:
            best_total, best_epoch = report.total, epoch
            best = [p.copy() for p in params]
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %d  l_bc=%.6g  l_kl=%.6g  total=%.6g", epoch, report.l_bc, report.l_kl, report.total)
        opt.step(params, grads.arrays())

    final, _ = total_loss_and_grad(net, data, graph, loss_cfg, targets=targets, need_grad=False)
    if np.isfinite(final.total) and final.total < best_total:
        best_epoch = cfg.epochs
        best = [p.copy() for p in params]
    for p, b in zip(params, best):
        p[...] = b
    return TrainResult(net=net, history=history, best_epoch=best_epoch,
                       seconds=time.perf_counter() - start, config=cfg.to_dict(), graph=graph)


def history_csv_text(history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "l_bc", "l_kl", "total", "degenerate_edges"])
    for i, r in enumerate(history):
        w.writerow([i, repr(r.l_bc), repr(r.l_kl), repr(r.total), r.degenerate_edges])
    return buf.getvalue()
