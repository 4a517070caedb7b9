"""Local gain regression error against sample count.

Fits K from noisy (dx, du = -K dx + noise) pairs and prints the mean
operator-norm error per sample count with the log-log slope, for
well-spread and for poorly excited states.

    python demos/sample_complexity.py
"""

import numpy as np

from lvr.envs.lqr import loglog_slope, lqr_regression_experiment, make_lqr_env

env = make_lqr_env(n=6, m=2, seed=0, noise_std=0.1)
counts = [50, 100, 200, 500, 1000, 2000, 5000]
good = lqr_regression_experiment(env, counts, trials=50, seed=0)
poor = lqr_regression_experiment(env, counts, trials=50, seed=0,
                                 excitation=np.diag([1, 1, 1, 1, 1, 1e-2]))
print("     N   error (I)   error (weak axis)")
for n, a, b in zip(counts, good["error"], poor["error"]):
    print(f"{n:6d}   {a:.5f}     {b:.5f}")
print(f"slopes: {loglog_slope(counts, good['error']):.3f} and {loglog_slope(counts, poor['error']):.3f}")
