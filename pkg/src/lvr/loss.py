"""Behavior cloning loss plus the latent/control orientation KL term.

For every non-degenerate edge ``e`` of the kNN graph, two distributions over
its neighborhood N(e) are compared:

    p_H(j | e) = softmax_j( cos(P dh_e, P dh_j) / tau )   latent chords
    p_U(j | e) = softmax_j( cos(du_e,  du_j)   / tau )    expert control deltas

and ``L_KL`` is the mean of KL(p_H || p_U). The combined objective is
``L_BC + lam * L_KL``.

Pairwise chord dot products are taken from the node Gram matrix of the
(projected) latents, so the cost is O(T^2 H + E C) rather than O(E C H).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import numerics
from .graph import DEGENERATE_EPS, edge_deltas
from .policy import GradientBundle, backward, forward, forward_latent

KL_LOG_FLOOR = np.log(numerics.KL_FLOOR)


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    lam: float = 0.1
    projection_mode: str = "row-space"   # or "identity"
    stop_grad_projection: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.projection_mode not in ("row-space", "identity"):
            raise ValueError(f"unknown projection_mode {self.projection_mode!r}")


@dataclass
class LossReport:
    l_bc: float
    l_kl: float
    total: float
    degenerate_edges: int


# -- per-edge reference operations -------------------------------------------

def latent_chords(net, states, edges):
    """``phi(x_j) - phi(x_i)`` for every edge (exact chords)."""
    h = forward_latent(net, np.atleast_2d(states))
    edges = np.asarray(edges)
    return h[edges[:, 1]] - h[edges[:, 0]]


def project_chords(chords, w, cfg):
    if cfg.projection_mode == "identity":
        return np.asarray(chords, dtype=float)
    p = numerics.row_space_projection(w)
    return np.asarray(chords, dtype=float) @ p


def orientation_distribution(deltas, neighborhood, tau):
    """Softmax over ``j in neighborhood`` of ``cos(delta_e, delta_j) / tau``.

    ``neighborhood[0]`` is the anchor edge ``e``. Members whose delta is
    degenerate are dropped; returns ``(support, probs)`` or ``None`` if the
    anchor itself is degenerate.
    """
    deltas = np.asarray(deltas, dtype=float)
    nb = [int(j) for j in neighborhood]
    norms = np.linalg.norm(deltas[nb], axis=1)
    if norms[0] < DEGENERATE_EPS:
        return None
    support = [j for j, n in zip(nb, norms) if n >= DEGENERATE_EPS]
    scores = np.array([numerics.cosine_similarity(deltas[nb[0]], deltas[j]) for j in support])
    return support, numerics.softmax(scores, tau)


# -- precomputed control side -------------------------------------------------

@dataclass
class ControlTargets:
    """Everything about the KL term that depends only on data and graph.

    Edges with a degenerate control delta never enter the loss, so the
    arrays here are packed over the remaining ``E_ok`` edges: ``nb[a]`` lists
    the (packed) members of N(e) for anchor ``a`` with the anchor first and
    ``valid`` marking real slots.
    """

    n_edges: int
    edge_ids: np.ndarray        # (E_ok,) original edge index of each packed edge
    src: np.ndarray
    dst: np.ndarray
    nb: np.ndarray              # (E_ok, C) packed neighbor indices
    valid: np.ndarray           # (E_ok, C)
    control_scores: np.ndarray  # (E_ok, C) cos(du_e, du_j)
    log_q: np.ndarray           # (E_ok, C) log p_U on the static support
    n_nodes: int
    tau: float
    mask_bias: np.ndarray       # (E_ok, C) 0 on valid slots, -inf on padding
    # sparse bookkeeping for _kl_terms:
    gram_to_dots: sp.csr_matrix   # (E_ok*C, T*T): chord dot products from the flat Gram matrix
    dots_to_gram: sp.csr_matrix   # (T*T, E_ok*C + E_ok): adjoint, plus chord-norm terms
    slot_to_edge: sp.csr_matrix   # (E_ok, E_ok*C): sums slot values onto the neighbor edge


def control_cosines(du, nb, valid):
    norms = np.linalg.norm(du, axis=1)
    safe = np.where(norms >= numerics.COSINE_EPS, norms, 1.0)
    unit = np.where((norms >= numerics.COSINE_EPS)[:, None], du / safe[:, None], 0.0)
    scores = np.einsum("ek,eck->ec", unit, unit[nb])
    return np.where(valid, np.clip(scores, -1.0, 1.0), 0.0)


def prepare_targets(data, graph, tau):
    """Precompute p_U and the index bookkeeping for a fixed dataset and graph."""
    edges = graph.edges
    n_e, t = len(edges), len(data)
    _, du, du_deg = edge_deltas(data.states, data.actions, edges)
    ok_idx = np.flatnonzero(~du_deg)
    remap = np.full(n_e, -1)
    remap[ok_idx] = np.arange(len(ok_idx))
    rows = graph.neighborhoods[ok_idx]
    member = rows >= 0
    packed = np.where(member, remap[np.where(member, rows, 0)], -1)
    valid = packed >= 0
    order = np.argsort(~valid, axis=1, kind="stable")
    packed = np.take_along_axis(packed, order, axis=1)
    valid = np.take_along_axis(valid, order, axis=1)
    width = max(1, int(valid.sum(axis=1).max())) if len(ok_idx) else 1
    packed, valid = packed[:, :width], valid[:, :width]
    self_idx = np.arange(len(ok_idx))[:, None]
    nb = np.where(valid, packed, self_idx)

    e_ok = edges[ok_idx]
    src, dst = e_ok[:, 0], e_ok[:, 1]
    ei, ej = src[:, None], dst[:, None]
    fi, fj = src[nb], dst[nb]
    # a_e . a_f = K[j_e, j_f] - K[j_e, i_f] - K[i_e, j_f] + K[i_e, i_f] for chords a = h_j - h_i
    gram_index = np.stack([(ej * t + fj).ravel(), (ej * t + fi).ravel(),
                           (ei * t + fj).ravel(), (ei * t + fi).ravel()])
    signs = np.repeat([1.0, -1.0, -1.0, 1.0], gram_index.shape[1])
    n_slots = gram_index.shape[1]
    slot = np.tile(np.arange(n_slots), 4)
    gram_to_dots = sp.csr_matrix((signs, (slot, gram_index.ravel())), shape=(n_slots, t * t))
    node_pairs = np.stack([dst * t + dst, dst * t + src, src * t + dst, src * t + src])
    n_ok = len(ok_idx)
    dots_to_gram = sp.csr_matrix(
        (np.concatenate([signs, np.repeat([1.0, -1.0, -1.0, 1.0], n_ok)]),
         (np.concatenate([gram_index.ravel(), node_pairs.ravel()]),
          np.concatenate([slot, n_slots + np.tile(np.arange(n_ok), 4)]))),
        shape=(t * t, n_slots + n_ok))
    slot_to_edge = sp.csr_matrix((np.ones(n_slots), (nb.ravel(), np.arange(n_slots))), shape=(n_ok, n_slots))
    scores = control_cosines(du[ok_idx], nb, valid)
    return ControlTargets(
        n_edges=n_e, edge_ids=ok_idx, src=src, dst=dst, nb=nb, valid=valid,
        control_scores=scores, log_q=_floored_log_softmax(scores, valid, tau),
        n_nodes=t, tau=tau, mask_bias=np.where(valid, 0.0, -np.inf),
        gram_to_dots=gram_to_dots, dots_to_gram=dots_to_gram, slot_to_edge=slot_to_edge,
    )


def _masked_log_softmax(scores, mask, tau):
    s = np.where(mask, scores / tau, -np.inf)
    m = s.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lse = m + np.log(np.sum(np.where(mask, np.exp(s - m), 0.0), axis=1, keepdims=True))
        return np.where(mask, s - lse, 0.0)


def _floored_log_softmax(scores, mask, tau):
    """log p_U restricted to ``mask`` (floored at log 1e-12 as in the KL)."""
    lq = _masked_log_softmax(scores, mask, tau)
    return np.where(mask, np.maximum(lq, KL_LOG_FLOOR), 0.0)


# -- losses -------------------------------------------------------------------

def bc_loss(net, data):
    """Mean over samples of the squared action error norm."""
    u = np.atleast_2d(forward_action_batch(net, data.states))
    r = u - data.actions
    return float(np.mean(np.sum(r * r, axis=1)))


def forward_action_batch(net, states):
    tape = forward(net, np.atleast_2d(states))
    return tape.latent @ net.W.T + net.b


def _kl_terms(h_proj, targets, tau, need_grad):
    """KL part on projected node latents ``h_proj`` (T, H).

    Returns ``(l_kl, n_degenerate, d_hproj)``; the gradient is of ``l_kl``.
    """
    if tau != targets.tau:
        raise ValueError(f"targets were prepared for tau={targets.tau}, loss uses tau={tau}")
    nb = targets.nb
    src, dst = targets.src, targets.dst
    t = targets.n_nodes
    k = h_proj @ h_proj.T
    g = k.ravel()
    diag = np.diagonal(k)
    r2 = diag[dst] + diag[src] - 2.0 * k[dst, src]
    # the Gram identity cancels badly for near-duplicate endpoints: recompute those
    close = r2 < 1e-6 * (diag[dst] + diag[src])
    if np.any(close):
        c = h_proj[dst[close]] - h_proj[src[close]]
        r2[close] = np.einsum("ij,ij->i", c, c)
    r = np.sqrt(np.maximum(r2, 0.0))
    ok = r >= DEGENERATE_EPS
    n_valid = int(ok.sum())
    n_degenerate = targets.n_edges - n_valid
    if n_valid == 0:
        return 0.0, n_degenerate, np.zeros_like(h_proj) if need_grad else None
    if n_valid == len(ok):
        mask, lq, neg = targets.valid, targets.log_q, targets.mask_bias
    else:
        mask = targets.valid & ok[nb] & ok[:, None]
        lq = _floored_log_softmax(targets.control_scores, mask, tau)
        # rows of degenerate anchors stay unmasked so the arithmetic is finite; they are dropped below
        neg = np.where(mask | ~ok[:, None], 0.0, -np.inf)

    dots = (targets.gram_to_dots @ g).reshape(nb.shape)
    r_safe = np.where(ok, r, 1.0)
    denom = r_safe[:, None] * r_safe[nb]
    cos = dots / denom

    # softmax over each neighborhood; masked slots get -inf scores and zero probability
    sc = cos / tau + neg
    sc -= sc.max(axis=1, keepdims=True)
    p = np.exp(sc)
    z = p.sum(axis=1, keepdims=True)
    p /= z
    with np.errstate(invalid="ignore"):
        diff = np.where(mask, sc - np.log(z) - lq, 0.0)
    kl_e = np.einsum("ec,ec->e", p, diff)
    l_kl = float(np.sum(kl_e[ok]) / n_valid)
    if not need_grad:
        return l_kl, n_degenerate, None

    # d l_kl / d cos (zero on masked slots since p is zero there)
    diff -= kl_e[:, None]
    g_cos = p * diff
    g_cos *= 1.0 / (tau * n_valid)
    g_cos[~ok] = 0.0
    gd = g_cos / denom
    # norms: cos = dot / (r_e r_f); d r_e / d chord_e = chord_e / r_e
    gc = g_cos * cos
    d_r = -np.sum(gc, axis=1) / r_safe
    gc /= r_safe[nb]
    d_r -= targets.slot_to_edge @ gc.ravel()
    d_r[~ok] = 0.0
    sr = 0.5 * d_r / r_safe   # halved: the matrix is symmetrized below
    # everything is a quadratic form in h_proj: accumulate its (T, T) coefficient matrix
    d_gram = (targets.dots_to_gram @ np.concatenate([gd.ravel(), sr])).reshape(t, t)
    d_h = (d_gram + d_gram.T) @ h_proj
    return l_kl, n_degenerate, d_h


def _projection(net, cfg, override=None):
    if cfg.projection_mode == "identity":
        return None
    if override is not None:
        return np.asarray(override, dtype=float)
    return numerics.row_space_projection(net.W)


def _projection_weight_grad(w, d_p):
    """Gradient w.r.t. W of <d_p, W^T (W W^T)^+ W>, assuming W W^T invertible."""
    m = numerics.pseudo_inverse(w @ w.T)
    gamma = w @ d_p @ w.T
    z = -m @ gamma @ m
    return m @ w @ d_p.T + m @ w @ d_p + (z + z.T) @ w


def kl_alignment_loss(net, data, graph, cfg, targets=None):
    if targets is None:
        targets = prepare_targets(data, graph, cfg.tau)
    h = forward_latent(net, data.states)
    p = _projection(net, cfg)
    hp = h if p is None else h @ p
    return _kl_terms(hp, targets, cfg.tau, need_grad=False)[0]


def total_loss_and_grad(net, data, graph, cfg, targets=None, need_grad=True, projection=None,
                        report_kl=True):
    """``(LossReport, GradientBundle)`` for ``L_BC + lam * L_KL``.

    ``p_U`` is constant. With ``stop_grad_projection`` the row-space
    projector is treated as a constant; otherwise its dependence on ``W`` is
    differentiated too (valid while ``W W^T`` keeps full rank).
    With ``lam == 0`` the KL term is evaluated for reporting only, and
    skipped (reported as nan) when ``report_kl`` is false.
    ``projection`` pins the row-space projector to a given matrix (used to
    check the stop-gradient variant against finite differences).
    """
    skip_kl = cfg.lam == 0 and not report_kl
    if targets is None and not skip_kl:
        targets = prepare_targets(data, graph, cfg.tau)
    tape = forward(net, data.states)
    h = tape.latent
    u = h @ net.W.T + net.b
    resid = u - data.actions
    t = len(data)
    l_bc = float(np.mean(np.sum(resid * resid, axis=1)))

    p = _projection(net, cfg, projection)
    hp = h if p is None else h @ p
    kl_grad = need_grad and cfg.lam > 0
    if skip_kl:
        l_kl, n_deg, d_hp = float("nan"), -1, None
    else:
        l_kl, n_deg, d_hp = _kl_terms(hp, targets, cfg.tau, need_grad=kl_grad)
    total = l_bc if cfg.lam == 0 else l_bc + cfg.lam * l_kl
    report = LossReport(l_bc=l_bc, l_kl=l_kl, total=total, degenerate_edges=n_deg)
    if not need_grad:
        return report, None

    grad_latent = None
    d_w_proj = None
    if kl_grad:
        d_h = d_hp if p is None else d_hp @ p
        grad_latent = cfg.lam * d_h
        if p is not None and not cfg.stop_grad_projection and projection is None:
            d_p = cfg.lam * (h.T @ d_hp)
            d_w_proj = _projection_weight_grad(net.W, d_p)
    grads = backward(net, tape, grad_action=2.0 * resid / t, grad_latent=grad_latent)
    if d_w_proj is not None:
        grads.W = grads.W + d_w_proj
    return report, grads


__all__ = [
    "LossConfig", "LossReport", "ControlTargets", "GradientBundle",
    "latent_chords", "project_chords", "orientation_distribution",
    "prepare_targets", "bc_loss", "kl_alignment_loss", "total_loss_and_grad",
]
