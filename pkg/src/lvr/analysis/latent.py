"""PCA structure of consecutive latent differences along a trajectory."""

from dataclasses import dataclass

import numpy as np

from .. import numerics
from ..policy import forward_latent

MIN_SAMPLES = 10
ZERO_NORM = 1e-10


@dataclass
class LatentGeometryReport:
    variance_ratios: np.ndarray   # leading PC variance fractions, non-increasing
    pc1: np.ndarray
    pc1_cosines: np.ndarray       # (T-1,) cosine of each delta with PC1 (0 for zero deltas)
    bundle_separation: float      # mean intra-mode cosine minus inter-mode cosine (nan without two modes)
    degenerate: bool
    n_deltas: int

    @property
    def pc1_ratio(self):
        return float(self.variance_ratios[0])

    def to_dict(self):
        return {
            "n_deltas": self.n_deltas,
            "degenerate": self.degenerate,
            "pc1_ratio": self.pc1_ratio,
            "variance_ratios": self.variance_ratios.tolist(),
            "bundle_separation": None if np.isnan(self.bundle_separation) else self.bundle_separation,
            "pc1": self.pc1.tolist(),
            "pc1_cosines": self.pc1_cosines.tolist(),
        }


def _unit_rows(v):
    n = np.linalg.norm(v, axis=1)
    out = np.zeros_like(v)
    ok = n > ZERO_NORM
    out[ok] = v[ok] / n[ok, None]
    return out, ok


def bundle_separation(deltas, labels):
    """Mean pairwise cosine within equal labels minus mean cosine across labels."""
    unit, ok = _unit_rows(np.asarray(deltas, dtype=float))
    labels = np.asarray(labels)[ok]
    unit = unit[ok]
    if len(np.unique(labels)) < 2:
        return float("nan")
    c = unit @ unit.T
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    if not same.any():
        return float("nan")
    return float(c[same].mean() - c[diff].mean())


def delta_geometry(deltas, labels=None, n_ratios=10):
    """Report for a given sequence of latent differences (rows)."""
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 2 or len(d) < MIN_SAMPLES - 1:
        raise ValueError(f"need at least {MIN_SAMPLES} consecutive samples")
    k = min(n_ratios, d.shape[1])
    unit, ok = _unit_rows(d)
    comps, var = numerics.pca(d, k)
    xc = d - d.mean(axis=0)
    total = float(np.sum(xc * xc) / (len(d) - 1))
    degenerate = not ok.any() or total <= ZERO_NORM ** 2
    if degenerate:
        return LatentGeometryReport(np.zeros(k), np.zeros(d.shape[1]), np.zeros(len(d)),
                                    float("nan"), True, len(d))
    ratios = np.minimum.accumulate(np.clip(var / total, 0.0, 1.0))
    cos = unit @ comps[0]
    sep = float("nan") if labels is None else bundle_separation(d, labels)
    return LatentGeometryReport(ratios, comps[0], cos, sep, False, len(d))


def latent_geometry(net, data, n_ratios=10):
    """PCA of h_{t+1} - h_t over the dataset's trajectory.

    Mode labels (when the dataset has them) are those of the first sample of
    each pair.
    """
    if len(data) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} consecutive samples, got {len(data)}")
    h = forward_latent(net, data.states)
    labels = None if data.modes is None else np.asarray(data.modes)[:-1]
    return delta_geometry(np.diff(h, axis=0), labels, n_ratios)
