"""Small dense linear algebra and probability helpers.

Matrices are 2-d float arrays and vectors are 1-d float arrays. Everything
here is a pure function of its inputs.
"""

import numpy as np

PINV_RCOND = 1e-10
COSINE_EPS = 1e-12
KL_FLOOR = 1e-12
MAX_EIG_DIM = 8


def _as_finite_matrix(m, name="m"):
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def pseudo_inverse(m, rcond=PINV_RCOND):
    """Moore-Penrose pseudo-inverse.

    Symmetric inputs (the Gram matrix ``W @ W.T`` is the only caller in the
    training path) go through a symmetric eigendecomposition; anything else
    falls back to an SVD. Singular values below ``rcond * sigma_max`` are
    treated as zero.
    """
    a = _as_finite_matrix(m)
    if a.size == 0:
        return a.T.copy()
    if a.shape[0] == a.shape[1] and np.allclose(a, a.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(a).max())):
        sym = 0.5 * (a + a.T)
        evals, evecs = np.linalg.eigh(sym)
        cutoff = rcond * np.abs(evals).max()
        keep = np.abs(evals) > cutoff
        inv = np.zeros_like(evals)
        inv[keep] = 1.0 / evals[keep]
        return (evecs * inv) @ evecs.T
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rcond * s.max() if s.size else 0.0
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def row_space_projection(w, rcond=PINV_RCOND):
    """Orthogonal projector ``W^T (W W^T)^+ W`` onto the row space of ``w``.

    Built as ``V_r V_r^T`` from the right singular vectors of ``w`` instead of
    through the Gram matrix, which would square the condition number. The
    rank cutoff matches the Gram route: ``sigma_i^2 > rcond * sigma_max^2``.
    """
    w = _as_finite_matrix(w, "w")
    if w.size == 0:
        return np.zeros((w.shape[1], w.shape[1]))
    _, s, vt = np.linalg.svd(w, full_matrices=False)
    v = vt[s * s > rcond * s.max() ** 2] if s.max() > 0 else vt[:0]
    p = v.T @ v
    return 0.5 * (p + p.T)


def cosine_similarity(a, b):
    """Cosine of the angle between two vectors; 0 if either is (near) zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < COSINE_EPS or nb < COSINE_EPS:
        return 0.0
    c = float(a @ b) / (na * nb)
    return min(1.0, max(-1.0, c))


def softmax(scores, tau=1.0):
    """Temperature softmax with max subtraction. Works along the last axis."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    s = np.asarray(scores, dtype=float) / tau
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def kl_divergence(p, q):
    """KL(p || q) in nats. Zero-probability entries of ``p`` contribute 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    q = np.maximum(q, KL_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def pca(samples, k):
    """Principal components of a sample set.

    Returns ``(components, explained_variance)`` where ``components`` is
    ``(k, d)`` with orthonormal rows and the variances are in descending
    order (unbiased sample covariance).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca needs at least 2 samples of equal dimension")
    d = x.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(evals)[::-1][:k]
    variances = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), idx])
    signs[signs == 0] = 1.0
    return comps * signs[:, None], variances


def spectral_radius(m):
    """Largest eigenvalue modulus of a small square matrix."""
    a = _as_finite_matrix(np.atleast_2d(m))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if a.shape[0] > MAX_EIG_DIM:
        raise ValueError(f"dimension {a.shape[0]} exceeds {MAX_EIG_DIM}")
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def eigenvalue_moduli(m):
    a = _as_finite_matrix(np.atleast_2d(m))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    return np.sort(np.abs(np.linalg.eigvals(a)))[::-1]
