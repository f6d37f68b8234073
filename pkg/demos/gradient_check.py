"""Checking the hand-written backward pass against finite differences.

First a single layer under a cross-entropy loss, then the full
``cora-citeseer`` preset with frozen dropout masks and the weight penalty,
exactly as ``gat gradcheck`` runs it.
"""

import numpy as np

from sparse_gat import from_edge_list, numcheck, softmax_cross_entropy
from sparse_gat import layer as L
from sparse_gat import tensor as T
from sparse_gat.cli import gradcheck_instance

rng = np.random.default_rng(0)
n = 12
graph = from_edge_list(n, rng.integers(0, n, size=(24, 2)), symmetrize=True, add_self_loops=True)
cfg = L.GatLayerConfig(5, 3, num_heads=2, merge="average", activation="none", output_layer=True)
params = L.init_layer_params(cfg, T.make_rng(1), dtype=np.float64)
x = rng.standard_normal((n, 5))
labels = rng.integers(0, 3, n)
mask = np.ones(n, dtype=bool)


def loss_fn(p):
    logits, cache = L.forward(x, p, cfg, graph)
    loss, grad_logits = softmax_cross_entropy(logits, labels, mask)
    _, grads = L.backward(grad_logits, cache, p, cfg, graph)
    return loss, grads


print(numcheck.gradcheck(loss_fn, params).summary())

# the whole preset; the numeric side evaluates the loss in extended precision
loss_fn, named, value_fn = gradcheck_instance("cora-citeseer", seed=0)
report = numcheck.gradcheck(loss_fn, named, max_coords=200, value_fn=value_fn)
print(report.summary())
