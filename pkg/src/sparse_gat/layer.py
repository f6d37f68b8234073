"""Graph attentional layer: masked multi-head neighbourhood attention.

For head ``k`` and receiving node ``i`` with neighbourhood ``N_i`` (row ``i``
of the CSR graph)::

    e_ij  = LeakyReLU(att_self[k] . W_k h_i + att_neigh[k] . W_k h_j)
    a_ij  = softmax over j in N_i of e_ij
    out_i = sum_j a_ij W_k h_j (+ bias[k])

Heads are concatenated (hidden layers) or averaged (output layer). The two
attention halves ``att_self`` and ``att_neigh`` together form the usual
``2F'`` attention vector; splitting them lets the per-node scores be computed
once in O(N F') and combined per edge in O(E).

Every kernel walks CSR rows; no N x N array is ever formed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import tensor
from .errors import ConfigError, ContractError, ShapeError
from .graph import CsrGraph

MERGES = ("concat", "average")
ATTENTIONS = ("learned", "constant")
ACTIVATIONS = ("elu", "none")
SKIPS = ("none", "identity", "projected")

# edges per block when gathering (E, K, F') operands in backward
_EDGE_CHUNK = 1 << 15


@dataclass(frozen=True)
class GatLayerConfig:
    in_features: int
    out_features: int
    num_heads: int = 1
    merge: str = "concat"
    attention: str = "learned"
    activation: str = "elu"
    leaky_slope: float = 0.2
    input_dropout: float = 0.0
    attn_dropout: float = 0.0
    use_bias: bool = True
    skip: str = "none"
    output_layer: bool = False

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1 or self.num_heads < 1:
            raise ConfigError("layer widths and head count must be positive")
        if self.merge not in MERGES:
            raise ConfigError(f"merge must be one of {MERGES}, got {self.merge!r}")
        if self.attention not in ATTENTIONS:
            raise ConfigError(f"attention must be one of {ATTENTIONS}, got {self.attention!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.skip not in SKIPS:
            raise ConfigError(f"skip must be one of {SKIPS}, got {self.skip!r}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        for p in (self.input_dropout, self.attn_dropout):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"dropout probabilities must lie in [0, 1), got {p}")
        if self.merge == "average":
            if not self.output_layer:
                raise ConfigError("head averaging is reserved for the output layer")
            if self.activation != "none":
                raise ConfigError("an averaging output layer defers its nonlinearity to the loss")
        if self.skip == "identity" and self.in_features != self.out_width:
            raise ConfigError(
                f"identity skip needs equal widths, got {self.in_features} -> {self.out_width}"
            )

    @property
    def out_width(self):
        if self.merge == "concat":
            return self.num_heads * self.out_features
        return self.out_features

    def to_dict(self):
        return dict(self.__dict__)


def init_layer_params(config, rng, dtype=tensor.DEFAULT_DTYPE):
    """Glorot-initialised parameters; attention vectors are drawn as ``2F' x 1`` columns."""
    k, f_in, f_out = config.num_heads, config.in_features, config.out_features
    heads = [tensor.glorot_init(f_in, f_out, rng, dtype) for _ in range(k)]
    att = [tensor.glorot_init(2 * f_out, 1, rng, dtype)[:, 0] for _ in range(k)]
    params = {
        "W": np.concatenate(heads, axis=1),
        "att_self": np.stack([a[:f_out] for a in att]),
        "att_neigh": np.stack([a[f_out:] for a in att]),
    }
    if config.use_bias:
        params["bias"] = np.zeros((k, f_out), dtype=dtype)
    if config.skip == "projected":
        params["skip"] = tensor.glorot_init(f_in, config.out_width, rng, dtype)
    return params


def param_shapes(config):
    k, f_in, f_out = config.num_heads, config.in_features, config.out_features
    shapes = {"W": (f_in, k * f_out), "att_self": (k, f_out), "att_neigh": (k, f_out)}
    if config.use_bias:
        shapes["bias"] = (k, f_out)
    if config.skip == "projected":
        shapes["skip"] = (f_in, config.out_width)
    return shapes


@dataclass
class LayerCache:
    config: GatLayerConfig
    params: dict
    graph: CsrGraph
    x: np.ndarray            # layer input after input dropout
    wh: np.ndarray           # (N, K, F') transformed features
    pre: np.ndarray          # (E, K) attention logits before LeakyReLU
    alpha: np.ndarray        # (E, K) normalised coefficients, before dropout
    alpha_used: np.ndarray   # (E, K) coefficients after attention dropout
    z: np.ndarray            # pre-activation output
    masks: dict


def _require_nonempty_rows(graph):
    if graph.num_nodes and graph.degrees.min() == 0:
        raise ContractError("empty neighbourhood; insert self-loops before attention")


def segment_softmax(logits, graph):
    """Softmax of ``(E, K)`` edge logits within each CSR row, max-shifted per row."""
    _require_nonempty_rows(graph)
    starts = graph.row_offsets[:-1]
    rows = graph.row_ids
    shift = np.maximum.reduceat(logits, starts, axis=0)
    ex = np.exp(logits - shift[rows])
    denom = np.add.reduceat(ex, starts, axis=0)
    return ex / denom[rows]


def attention_logits(wh, att_self, att_neigh, graph):
    """Pre-LeakyReLU scores ``att_self . Wh_i + att_neigh . Wh_j`` for every stored edge."""
    s_self = np.einsum("nkf,kf->nk", wh, att_self)
    s_neigh = np.einsum("nkf,kf->nk", wh, att_neigh)
    return s_self[graph.row_ids] + s_neigh[graph.col_indices]


def attention_coefficients(wh, att_self, att_neigh, graph, leaky_slope=0.2):
    """Normalised attention per edge.

    ``wh`` is ``(N, F')`` for a single head (result ``(E,)``) or ``(N, K, F')``
    with ``(K, F')`` attention halves (result ``(E, K)``).
    """
    single = wh.ndim == 2
    if single:
        wh, att_self, att_neigh = wh[:, None, :], np.atleast_2d(att_self), np.atleast_2d(att_neigh)
    if wh.shape[0] != graph.num_nodes:
        raise ShapeError(f"{wh.shape[0]} feature rows for a {graph.num_nodes}-node graph")
    pre = attention_logits(wh, att_self, att_neigh, graph)
    alpha = segment_softmax(tensor.leaky_relu(pre, leaky_slope), graph)
    return alpha[:, 0] if single else alpha


def _sparse(weights, graph):
    n = graph.num_nodes
    return sp.csr_matrix((weights, graph.col_indices, graph.row_offsets), shape=(n, n))


def _aggregate(alpha, wh, graph):
    """``out[i, k] = sum_{j in N_i} alpha[e_ij, k] * wh[j, k]`` for every head."""
    n, k, f = wh.shape
    out = np.empty((n, k, f), dtype=wh.dtype)
    for h in range(k):
        out[:, h, :] = _sparse(alpha[:, h], graph) @ np.ascontiguousarray(wh[:, h, :])
    return out


def _aggregate_transpose(alpha, g, graph):
    """Adjoint of :func:`_aggregate` w.r.t. ``wh``."""
    n, k, f = g.shape
    out = np.empty((n, k, f), dtype=g.dtype)
    for h in range(k):
        out[:, h, :] = _sparse(alpha[:, h], graph).T @ np.ascontiguousarray(g[:, h, :])
    return out


def _edge_dot(g, wh, graph):
    """``out[e, k] = g[row(e), k] . wh[col(e), k]`` computed in edge blocks."""
    rows, cols = graph.row_ids, graph.col_indices
    out = np.empty((rows.shape[0], g.shape[1]), dtype=g.dtype)
    for s in range(0, rows.shape[0], _EDGE_CHUNK):
        e = s + _EDGE_CHUNK
        out[s:e] = np.einsum("ekf,ekf->ek", g[rows[s:e]], wh[cols[s:e]])
    return out


def _segment_sum(values, graph):
    return np.add.reduceat(values, graph.row_offsets[:-1], axis=0)


def _scatter_cols(values, graph):
    """Sum ``(E, K)`` edge values into their column (neighbour) node."""
    n = graph.num_nodes
    return np.stack(
        [np.bincount(graph.col_indices, weights=values[:, h], minlength=n) for h in range(values.shape[1])],
        axis=1,
    ).astype(values.dtype, copy=False)


def forward(h, params, config, graph, training=False, rng=None, masks=None):
    """Run the layer. Returns ``(output, cache)``.

    In training mode inverted dropout is applied to the input rows and to the
    normalised coefficients (no renormalisation). Dropout masks are drawn from
    ``rng`` unless ``masks`` (from an earlier cache) is given, which freezes
    them. Evaluation mode is deterministic and ignores ``rng``.
    """
    dtype = params["W"].dtype
    n, k, f_out = graph.num_nodes, config.num_heads, config.out_features
    if h.ndim != 2 or h.shape != (n, config.in_features):
        raise ShapeError(f"layer expects input {(n, config.in_features)}, got {h.shape}")
    x = np.asarray(h, dtype=dtype)
    used_masks = {}
    if training and config.input_dropout > 0:
        m = masks["input"] if masks else tensor.dropout_mask(x.shape, config.input_dropout, rng, dtype)
        x = x * m
        used_masks["input"] = m

    wh = tensor.matmul(x, params["W"]).reshape(n, k, f_out)
    if config.attention == "learned":
        pre = attention_logits(wh, params["att_self"], params["att_neigh"], graph)
    else:
        pre = np.zeros((graph.num_edges, k), dtype=dtype)
    alpha = segment_softmax(tensor.leaky_relu(pre, config.leaky_slope), graph)
    alpha_used = alpha
    if training and config.attn_dropout > 0:
        m = masks["attn"] if masks else tensor.dropout_mask(alpha.shape, config.attn_dropout, rng, dtype)
        alpha_used = alpha * m
        used_masks["attn"] = m

    agg = _aggregate(alpha_used, wh, graph)
    if config.use_bias:
        agg = agg + params["bias"]
    z = agg.reshape(n, k * f_out) if config.merge == "concat" else agg.mean(axis=1)
    if config.skip == "identity":
        z = z + x
    elif config.skip == "projected":
        z = z + x @ params["skip"]
    out = tensor.elu(z) if config.activation == "elu" else z
    tensor.check_finite(out, "layer output")
    cache = LayerCache(config, params, graph, x, wh, pre, alpha, alpha_used, z, used_masks)
    return out, cache


def backward(grad_out, cache, params, config, graph):
    """Reverse-mode gradients of a :func:`forward` call.

    Returns ``(grad_input, grads)`` where ``grads`` mirrors the keys of
    ``params``. Attention halves receive exact zeros under constant attention.
    """
    if cache.params is not params or cache.config != config:
        raise ContractError("layer cache was produced with different parameters or config")
    if cache.graph is not graph and cache.graph != graph:
        raise ContractError("layer cache was produced on a different graph")
    n, k, f_out = graph.num_nodes, config.num_heads, config.out_features
    g = np.asarray(grad_out, dtype=cache.z.dtype)
    if g.shape != cache.z.shape:
        raise ShapeError(f"grad_out shape {g.shape} != output shape {cache.z.shape}")
    if config.activation == "elu":
        g = g * tensor.elu_grad(cache.z)

    grads = {}
    g_x = np.zeros_like(cache.x)
    if config.skip == "identity":
        g_x += g
    elif config.skip == "projected":
        grads["skip"] = cache.x.T @ g
        g_x += g @ params["skip"].T

    if config.merge == "concat":
        g_agg = g.reshape(n, k, f_out)
    else:
        g_agg = np.repeat(g[:, None, :] / g.dtype.type(k), k, axis=1)
    if config.use_bias:
        grads["bias"] = g_agg.sum(axis=0)

    g_wh = _aggregate_transpose(cache.alpha_used, g_agg, graph)
    if config.attention == "learned":
        g_alpha = _edge_dot(g_agg, cache.wh, graph)
        if "attn" in cache.masks:
            g_alpha = g_alpha * cache.masks["attn"]
        alpha = cache.alpha
        row_dot = _segment_sum(alpha * g_alpha, graph)
        g_logit = alpha * (g_alpha - row_dot[graph.row_ids])
        g_pre = g_logit * tensor.leaky_relu_grad(cache.pre, config.leaky_slope)
        g_self = _segment_sum(g_pre, graph)
        g_neigh = _scatter_cols(g_pre, graph)
        grads["att_self"] = np.einsum("nkf,nk->kf", cache.wh, g_self)
        grads["att_neigh"] = np.einsum("nkf,nk->kf", cache.wh, g_neigh)
        g_wh += g_self[:, :, None] * params["att_self"] + g_neigh[:, :, None] * params["att_neigh"]
    else:
        grads["att_self"] = np.zeros_like(params["att_self"])
        grads["att_neigh"] = np.zeros_like(params["att_neigh"])

    g_wh = g_wh.reshape(n, k * f_out)
    grads["W"] = cache.x.T @ g_wh
    g_x += g_wh @ params["W"].T
    if "input" in cache.masks:
        g_x = g_x * cache.masks["input"]
    return g_x, grads


def export_attention(path, graph, alpha):
    """Write ``i<TAB>j<TAB>head<TAB>alpha`` rows, one per stored edge and head."""
    alpha = np.asarray(alpha)
    if alpha.ndim == 1:
        alpha = alpha[:, None]
    rows, cols = graph.row_ids, graph.col_indices
    with open(path, "w") as fh:
        for head in range(alpha.shape[1]):
            for i, j, a in zip(rows.tolist(), cols.tolist(), alpha[:, head].tolist()):
                fh.write(f"{i}\t{j}\t{head}\t{a:.9g}\n")
