"""Synthetic linear system for the local gain-regression experiment.

Given a stable pair (A, B) and its LQR gain K*, noisy samples
``du = -K* dx + noise`` are regressed by least squares and the operator-norm
error of the fitted gain is tracked against the sample count.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_are


@dataclass
class LqrSyntheticEnv:
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    noise_std: float = 0.1

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def action_dim(self):
        return self.B.shape[1]


def make_lqr_env(n=4, m=2, seed=0, noise_std=0.1, rho=0.95):
    if n > 10:
        raise ValueError("state dimension is limited to 10")
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a *= rho / np.max(np.abs(np.linalg.eigvals(a)))
    b = rng.normal(size=(n, m))
    q, r = np.eye(n), np.eye(m)
    p = solve_discrete_are(a, b, q, r)
    k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    return LqrSyntheticEnv(A=a, B=b, K=k, noise_std=noise_std)


def fit_gain(dx, du):
    """Least-squares K_hat with du ~ -K_hat dx. ``None`` if the design is rank deficient."""
    if np.linalg.matrix_rank(dx) < dx.shape[1]:
        return None
    sol, *_ = np.linalg.lstsq(dx, du, rcond=None)
    return -sol.T


def lqr_regression_experiment(env, sample_counts, trials=50, seed=0, excitation=None):
    """Mean operator-norm gain error per sample count.

    ``excitation`` is the covariance of dx (identity by default). Returns a
    dict with arrays ``n``, ``error`` (mean over successful trials),
    ``error_std`` and ``failures``.
    """
    rng = np.random.default_rng(seed)
    n = env.state_dim
    cov = np.eye(n) if excitation is None else np.asarray(excitation, dtype=float)
    chol = np.linalg.cholesky(cov)
    means, stds, fails = [], [], []
    for count in sample_counts:
        errs, n_fail = [], 0
        for _ in range(trials):
            dx = rng.normal(size=(count, n)) @ chol.T
            du = -dx @ env.K.T + env.noise_std * rng.normal(size=(count, env.action_dim))
            k_hat = fit_gain(dx, du)
            if k_hat is None:
                n_fail += 1
                continue
            errs.append(np.linalg.norm(k_hat - env.K, 2))
        means.append(np.mean(errs) if errs else np.nan)
        stds.append(np.std(errs) if errs else np.nan)
        fails.append(n_fail)
    return {
        "n": np.asarray(sample_counts),
        "error": np.array(means),
        "error_std": np.array(stds),
        "failures": np.array(fails),
    }


def loglog_slope(counts, errors):
    ok = np.isfinite(errors) & (np.asarray(errors) > 0)
    x = np.log(np.asarray(counts, dtype=float)[ok])
    y = np.log(np.asarray(errors)[ok])
    return float(np.polyfit(x, y, 1)[0])
