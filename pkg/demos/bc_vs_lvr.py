"""BC and LVR on one 250-sample hopper demonstration.

Trains both methods from the same initialization seed, then reports
closed-loop survival, the Poincare verdict and the PC1 share of latent
differences for each. Pass a number of seeds to average (default 1); each
seed costs about a minute.

    python demos/bc_vs_lvr.py [n_seeds]
"""

import sys

import numpy as np

from lvr.analysis import estimate_return_map, latent_geometry
from lvr.envs import PolicyController, evaluate_checkpoint, generate_demos, make_env
from lvr.trainer import TrainConfig, train

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 1
env = make_env("hopper")
demo = generate_demos(env, n_steps=250, seed=0)
print(f"demo: {len(demo)} samples, {demo.meta['section_crossings']} apex crossings")

rows = {"bc": [], "lvr": []}
for seed in range(n_seeds):
    for method, lam in (("bc", 0.0), ("lvr", 0.1)):
        # scalar action: compare chords in the full latent space
        res = train(demo, TrainConfig(seed=seed, lam=lam, projection_mode="identity"))
        m = evaluate_checkpoint(res.net, env, episodes=100, seed=seed)
        pa = estimate_return_map(env, PolicyController(env, res.net))
        pc1 = latent_geometry(res.net, demo).pc1_ratio
        rows[method].append((m["survival_mean"], pa.spectral_radius, pa.stable, pc1))
        print(f"seed {seed} {method:>3}: L_BC {res.history[-1].l_bc:.4f}  survival {m['survival_mean']:6.1f}"
              f"  rho {pa.spectral_radius:.3f} ({pa.verdict})  PC1 {pc1:.3f}")

for method, r in rows.items():
    r = np.array(r, dtype=float)
    print(f"{method:>3}: mean survival {r[:, 0].mean():.1f}, stable {int(r[:, 2].sum())}/{len(r)}, "
          f"mean PC1 {r[:, 3].mean():.3f}")
