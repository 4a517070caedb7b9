"""Walk through the LVR loss on a handful of samples.

Builds the state-space graph for a short noisy circle, prints one edge's
neighborhood with its latent and control orientation distributions, then
compares the KL term before and after a short LVR training run.

    python demos/loss_anatomy.py
"""

import numpy as np

from lvr.data import Dataset
from lvr.graph import build_graph
from lvr.loss import LossConfig, latent_chords, orientation_distribution, total_loss_and_grad
from lvr.graph import edge_deltas
from lvr.policy import init_params, standardization
from lvr.trainer import TrainConfig, train

np.set_printoptions(precision=3, suppress=True)

# states on a circle, actions rotate with the phase
t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
rng = np.random.default_rng(0)
x = np.column_stack([np.cos(t), np.sin(t), 0.1 * rng.normal(size=40)])
u = np.column_stack([-np.sin(t), np.cos(t)])
data = Dataset(x, u, 0.02)

stats = standardization(x)
graph = build_graph(data, k=6, q=0.8, cap=8, stats=stats)
print(f"{len(data)} samples -> {graph.n_edges} directed edges after pruning")

e = 5
nb = graph.neighborhood(e)
print(f"edge {e} = {tuple(graph.edges[e].tolist())}, neighborhood {np.asarray(nb).tolist()}")

net = init_params(0, [3, 32, 32, 2], x_mean=stats[0], x_std=stats[1])
cfg = LossConfig(tau=0.1, lam=1.0, projection_mode="row-space")
du = edge_deltas(data.states, data.actions, graph.edges)[1]
dh = latent_chords(net, data.states, graph.edges)
_, p_u = orientation_distribution(du, nb, cfg.tau)
_, p_h = orientation_distribution(dh, nb, cfg.tau)
print("p_U (control deltas) :", p_u)
print("p_H (latent chords)  :", p_h)

before, _ = total_loss_and_grad(net, data, graph, cfg)
res = train(data, TrainConfig(epochs=300, lam=1.0, hidden=(32, 32), k=6, cap=8, learning_rate=3e-3))
after = res.history[-1]
print(f"L_BC {before.l_bc:.4f} -> {after.l_bc:.4f}")
print(f"L_KL {before.l_kl:.4f} -> {after.l_kl:.4f}")
_, p_h = orientation_distribution(latent_chords(res.net, data.states, graph.edges), nb, cfg.tau)
print("p_H after training   :", p_h)
