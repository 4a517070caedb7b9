"""Discrete-time Riccati recursions."""

import numpy as np


def finite_horizon_lqr(a_seq, b_seq, q, r, q_final):
    """Backward sweep for x_{t+1} = A_t x_t + B_t u_t, cost sum x'Qx + u'Ru.

    Returns ``(gains, costs)`` with ``u_t = -gains[t] @ x_t`` and
    ``costs[t]`` the cost-to-go matrix P_t (``costs[-1] == q_final``).
    """
    horizon = len(a_seq)
    p = np.array(q_final, dtype=float)
    gains = [None] * horizon
    costs = [None] * (horizon + 1)
    costs[horizon] = p
    for t in range(horizon - 1, -1, -1):
        a, b = a_seq[t], b_seq[t]
        k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
        p = q + a.T @ p @ (a - b @ k)
        p = 0.5 * (p + p.T)
        gains[t] = k
        costs[t] = p
    return gains, costs


def riccati_fixed_point(a, b, q, r, tol=1e-12, max_iter=100000):
    """Infinite-horizon gain by iterating the recursion to convergence."""
    p = np.array(q, dtype=float)
    for _ in range(max_iter):
        k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
        p_new = q + a.T @ p @ (a - b @ k)
        if np.max(np.abs(p_new - p)) < tol * max(1.0, np.max(np.abs(p))):
            return k, p_new
        p = p_new
    raise RuntimeError("Riccati iteration did not converge")
