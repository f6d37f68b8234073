"""Attention coefficients on a three-node path.

Builds the graph 0 - 1 - 2 (with self-loops), runs one attention layer and
prints each node's coefficients over its neighbourhood. Setting both
attention vectors to zero makes every neighbourhood uniform, which is the
constant-attention ablation.
"""

import numpy as np

from sparse_gat import from_edge_list
from sparse_gat import layer as L
from sparse_gat import tensor as T

graph = from_edge_list(3, [(0, 1), (1, 2)], symmetrize=True, add_self_loops=True)
features = np.array([[1.0, 0.0], [0.5, -1.0], [-0.25, 2.0]], dtype=np.float32)

cfg = L.GatLayerConfig(in_features=2, out_features=4, num_heads=2)
params = L.init_layer_params(cfg, T.make_rng(seed=0))

out, cache = L.forward(features, params, cfg, graph)
print("output shape:", out.shape)  # two heads of width 4, concatenated

for i in range(graph.num_nodes):
    lo, hi = graph.row_offsets[i], graph.row_offsets[i + 1]
    for head in range(cfg.num_heads):
        pairs = ", ".join(f"{j}: {a:.3f}" for j, a in zip(graph.neighbors(i), cache.alpha[lo:hi, head]))
        print(f"node {i} head {head}  {{{pairs}}}")

# zero attention vectors give 1 / |N_i| everywhere
params["att_self"][:] = 0
params["att_neigh"][:] = 0
_, cache = L.forward(features, params, cfg, graph)
print("uniform after zeroing a:", np.round(cache.alpha[:, 0], 3).tolist())
