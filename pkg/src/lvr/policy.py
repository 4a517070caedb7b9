"""ELU multilayer perceptron policy with a linear readout.

The policy is ``u = W @ phi(x) + b`` where ``phi`` is the stack of hidden
ELU layers applied to the standardized input. Forward and reverse passes are
written out layer by layer; there is no autodiff graph.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (128, 128, 128)


def elu(t):
    return np.where(t > 0, t, np.expm1(np.minimum(t, 0.0)))


def elu_grad(t):
    return np.where(t > 0, 1.0, np.exp(np.minimum(t, 0.0)))


@dataclass
class PolicyNet:
    weights: list
    biases: list
    W: np.ndarray
    b: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def latent_dim(self):
        return self.W.shape[1]

    @property
    def action_dim(self):
        return self.W.shape[0]

    @property
    def widths(self):
        return [self.input_dim] + [w.shape[0] for w in self.weights] + [self.action_dim]

    def params(self):
        """Parameters in a fixed order: hidden (W_l, b_l) pairs, then readout."""
        out = []
        for w, c in zip(self.weights, self.biases):
            out += [w, c]
        return out + [self.W, self.b]

    def copy(self):
        return PolicyNet(
            weights=[w.copy() for w in self.weights],
            biases=[c.copy() for c in self.biases],
            W=self.W.copy(),
            b=self.b.copy(),
            x_mean=self.x_mean.copy(),
            x_std=self.x_std.copy(),
        )

    def __call__(self, x):
        return forward_action(self, x)


@dataclass
class GradientBundle:
    weights: list
    biases: list
    W: np.ndarray
    b: np.ndarray
    x: np.ndarray = field(default=None)

    def arrays(self):
        out = []
        for w, c in zip(self.weights, self.biases):
            out += [w, c]
        return out + [self.W, self.b]

    def __add__(self, other):
        return GradientBundle(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
            W=self.W + other.W,
            b=self.b + other.b,
            x=None if self.x is None or other.x is None else self.x + other.x,
        )

    def scaled(self, c):
        return GradientBundle(
            weights=[c * a for a in self.weights],
            biases=[c * a for a in self.biases],
            W=c * self.W,
            b=c * self.b,
            x=None if self.x is None else c * self.x,
        )


@dataclass
class Tape:
    """Activations recorded by :func:`forward` for the reverse pass."""

    x: np.ndarray          # standardized inputs, (B, n)
    pre: list              # pre-activations per hidden layer, (B, h_l)
    post: list             # post-activations per hidden layer, (B, h_l)
    squeeze: bool = False

    @property
    def latent(self):
        return self.post[-1]


def zeros_like_grad(net):
    return GradientBundle(
        weights=[np.zeros_like(w) for w in net.weights],
        biases=[np.zeros_like(c) for c in net.biases],
        W=np.zeros_like(net.W),
        b=np.zeros_like(net.b),
    )


def init_params(seed, widths, scheme="glorot_uniform", x_mean=None, x_std=None):
    """Fresh network for ``widths = [n_in, h_1, ..., h_L, n_out]``.

    ``glorot_uniform`` draws each weight matrix from
    U(-sqrt(6 / (fan_in + fan_out)), +...) with zero biases; ``zeros`` gives
    an all-zero net. Deterministic in ``seed``.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 3 or min(widths) < 1:
        raise ValueError(f"widths must be [n_in, hidden..., n_out] with positive entries, got {widths}")
    rng = np.random.default_rng(seed)
    mats = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        if scheme == "glorot_uniform":
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            mats.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        elif scheme == "zeros":
            mats.append(np.zeros((fan_out, fan_in)))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
    n_in = widths[0]
    return PolicyNet(
        weights=mats[:-1],
        biases=[np.zeros(w) for w in widths[1:-1]],
        W=mats[-1],
        b=np.zeros(widths[-1]),
        x_mean=np.zeros(n_in) if x_mean is None else np.asarray(x_mean, dtype=float).copy(),
        x_std=np.ones(n_in) if x_std is None else np.asarray(x_std, dtype=float).copy(),
    )


def standardization(states):
    """Per-dimension mean and std of a state set; constant dims get std 1."""
    s = np.asarray(states, dtype=float)
    mean = s.mean(axis=0)
    std = s.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def standardize(net, x):
    return (np.asarray(x, dtype=float) - net.x_mean) / net.x_std


def forward(net, x):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != net.input_dim:
        raise ValueError(f"input has dimension {xb.shape[1]}, network expects {net.input_dim}")
    xs = (xb - net.x_mean) / net.x_std
    pre, post = [], []
    a = xs
    for w, c in zip(net.weights, net.biases):
        z = a @ w.T + c
        a = elu(z)
        pre.append(z)
        post.append(a)
    return Tape(x=xs, pre=pre, post=post, squeeze=squeeze)


def forward_latent(net, x):
    tape = forward(net, x)
    return tape.latent[0] if tape.squeeze else tape.latent


def forward_action(net, x):
    tape = forward(net, x)
    u = tape.latent @ net.W.T + net.b
    return u[0] if tape.squeeze else u


def backward(net, tape, grad_action=None, grad_latent=None):
    """Reverse pass for the scalar ``<grad_action, u> + <grad_latent, h>``.

    Either cotangent may be omitted. Shapes follow the forward input: 1-d
    cotangents for a single state, ``(B, .)`` for a batch. The returned
    bundle carries parameter gradients summed over the batch and the input
    gradient in ``.x`` (raw, un-standardized coordinates).
    """
    h = tape.latent
    bsz = h.shape[0]

    def _batch(g, width, what):
        g = np.asarray(g, dtype=float)
        if tape.squeeze and g.ndim == 1:
            g = g[None, :]
        if g.shape != (bsz, width):
            raise ValueError(f"{what} cotangent has shape {g.shape}, expected {(bsz, width)}")
        return g

    grads = zeros_like_grad(net)
    dh = np.zeros_like(h)
    if grad_action is not None:
        ga = _batch(grad_action, net.action_dim, "action")
        grads.W = ga.T @ h
        grads.b = ga.sum(axis=0)
        dh = dh + ga @ net.W
    if grad_latent is not None:
        dh = dh + _batch(grad_latent, net.latent_dim, "latent")

    da = dh
    for layer in range(len(net.weights) - 1, -1, -1):
        dz = da * elu_grad(tape.pre[layer])
        a_in = tape.post[layer - 1] if layer > 0 else tape.x
        grads.weights[layer] = dz.T @ a_in
        grads.biases[layer] = dz.sum(axis=0)
        da = dz @ net.weights[layer]
    dx = da / net.x_std
    grads.x = dx[0] if tape.squeeze else dx
    return grads


def to_dict(net):
    return {
        "widths": net.widths,
        "weights": [w.tolist() for w in net.weights],
        "biases": [c.tolist() for c in net.biases],
        "W": net.W.tolist(),
        "b": net.b.tolist(),
        "x_mean": net.x_mean.tolist(),
        "x_std": net.x_std.tolist(),
    }


def from_dict(d):
    net = PolicyNet(
        weights=[np.array(w, dtype=float).reshape(o, i) for w, o, i in zip(d["weights"], d["widths"][1:-1], d["widths"][:-2])],
        biases=[np.array(c, dtype=float) for c in d["biases"]],
        W=np.array(d["W"], dtype=float).reshape(d["widths"][-1], d["widths"][-2]),
        b=np.array(d["b"], dtype=float),
        x_mean=np.array(d["x_mean"], dtype=float),
        x_std=np.array(d["x_std"], dtype=float),
    )
    if net.widths != list(d["widths"]):
        raise ValueError("checkpoint widths do not match stored parameters")
    return net


def config_hash(config):
    """Short stable hash of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, net, config=None, extra=None):
    """Write a JSON checkpoint. Floats round-trip bit-exactly through repr."""
    payload = {
        "format": "lvr-policy",
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(config or {}),
        "config": config or {},
        "net": to_dict(net),
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def load_checkpoint(path):
    """Returns ``(net, payload)``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "lvr-policy":
        raise ValueError(f"{path} is not a policy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    return from_dict(payload["net"]), payload
