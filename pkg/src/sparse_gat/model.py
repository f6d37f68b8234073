"""Stacked GAT models, the reference architectures, losses and checkpoints."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import binio, layer, tensor
from .errors import ConfigError, ContractError, DataError, FormatError, ShapeError
from .graph import self_loop_graph
from .layer import GatLayerConfig

TASKS = ("single-label", "multi-label")
NEIGHBORHOODS = ("graph", "self")


@dataclass
class GatModel:
    """An ordered stack of GAT layers.

    ``neighborhood="self"`` restricts every node to ``{i}``, which turns the
    stack into a per-node shared MLP (the structure-free baseline).
    """

    configs: list
    params: list
    task: str = "single-label"
    neighborhood: str = "graph"

    def __post_init__(self):
        if not self.configs or len(self.configs) != len(self.params):
            raise ConfigError("model needs one parameter set per layer config")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.neighborhood not in NEIGHBORHOODS:
            raise ConfigError(f"neighborhood must be one of {NEIGHBORHOODS}")
        for a, b in zip(self.configs, self.configs[1:]):
            if a.out_width != b.in_features:
                raise ConfigError(f"layer widths do not chain: {a.out_width} -> {b.in_features}")
            if a.output_layer:
                raise ConfigError("only the last layer may be an output layer")
        last = self.configs[-1]
        if not last.output_layer or last.activation != "none":
            raise ConfigError("the last layer must be an output layer with deferred nonlinearity")
        for cfg, p in zip(self.configs, self.params):
            shapes = layer.param_shapes(cfg)
            if set(shapes) != set(p) or any(p[k].shape != s for k, s in shapes.items()):
                raise ShapeError("parameter shapes do not match layer config")

    @property
    def in_features(self):
        return self.configs[0].in_features

    @property
    def num_outputs(self):
        return self.configs[-1].out_width

    @property
    def dtype(self):
        return self.params[0]["W"].dtype

    def named_params(self):
        """``(name, array)`` pairs in declaration order, e.g. ``("layer0.W", ...)``."""
        for idx, (cfg, p) in enumerate(zip(self.configs, self.params)):
            for key in layer.param_shapes(cfg):
                yield f"layer{idx}.{key}", p[key]

    def astype(self, dtype):
        params = [{k: v.astype(dtype) for k, v in p.items()} for p in self.params]
        return GatModel(list(self.configs), params, self.task, self.neighborhood)

    def copy(self):
        return self.astype(self.dtype)


def init_model(configs, rng, task="single-label", neighborhood="graph", dtype=tensor.DEFAULT_DTYPE):
    params = [layer.init_layer_params(cfg, rng, dtype) for cfg in configs]
    return GatModel(list(configs), params, task, neighborhood)


@dataclass(frozen=True)
class ModelPreset:
    """Architecture plus the optimisation recipe that goes with it."""

    name: str
    task: str
    neighborhood: str
    layers: tuple
    lr: float
    l2_lambda: float
    patience: int = 100
    batch_graphs: int = 1
    extra: dict = field(default_factory=dict)

    def build(self, rng, dtype=tensor.DEFAULT_DTYPE):
        return init_model(self.layers, rng, self.task, self.neighborhood, dtype)


def _citation_layers(num_features, num_classes, out_heads, attention, dropout=0.6):
    return (
        GatLayerConfig(
            num_features, 8, num_heads=8, merge="concat", activation="elu",
            input_dropout=dropout, attn_dropout=dropout, attention=attention,
        ),
        GatLayerConfig(
            64, num_classes, num_heads=out_heads, merge="average", activation="none",
            input_dropout=dropout, attn_dropout=dropout, attention=attention, output_layer=True,
        ),
    )


def _ppi_layers(num_features, num_classes, attention, hidden=256):
    width = 4 * hidden
    return (
        GatLayerConfig(num_features, hidden, num_heads=4, activation="elu", attention=attention),
        GatLayerConfig(width, hidden, num_heads=4, activation="elu", attention=attention, skip="identity"),
        GatLayerConfig(
            width, num_classes, num_heads=6, merge="average", activation="none",
            attention=attention, output_layer=True,
        ),
    )


PRESET_NAMES = (
    "cora-citeseer",
    "const-cora-citeseer",
    "pubmed",
    "ppi",
    "const-ppi",
    "ppi-64",
    "const-ppi-64",
    "mlp-baseline",
)


def get_preset(name, num_features, num_classes):
    """Expand a named architecture for a dataset with the given input/label widths."""
    if name in ("cora-citeseer", "const-cora-citeseer"):
        att = "constant" if name.startswith("const-") else "learned"
        return ModelPreset(name, "single-label", "graph",
                           _citation_layers(num_features, num_classes, 1, att), lr=0.005, l2_lambda=5e-4)
    if name == "pubmed":
        return ModelPreset(name, "single-label", "graph",
                           _citation_layers(num_features, num_classes, 8, "learned"), lr=0.01, l2_lambda=1e-3)
    if name in ("ppi", "const-ppi", "ppi-64", "const-ppi-64"):
        att = "constant" if name.startswith("const-") else "learned"
        hidden = 64 if name.endswith("-64") else 256
        return ModelPreset(name, "multi-label", "graph", _ppi_layers(num_features, num_classes, att, hidden),
                           lr=0.005, l2_lambda=0.0, batch_graphs=2)
    if name == "mlp-baseline":
        return ModelPreset(name, "single-label", "self",
                           _citation_layers(num_features, num_classes, 1, "learned"), lr=0.005, l2_lambda=5e-4)
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


@dataclass
class ForwardCaches:
    model: GatModel
    graph: object
    layers: list

    @property
    def masks(self):
        return [c.masks for c in self.layers]


def model_forward(model, bundle, rng=None, training=False, masks=None):
    """Forward pass over a whole bundle; returns ``(logits, caches)``."""
    return forward_arrays(model, bundle.features, bundle.graph, rng, training, masks)


def forward_arrays(model, features, graph, rng=None, training=False, masks=None):
    if features.ndim != 2 or features.shape[1] != model.in_features:
        raise ShapeError(f"model expects {model.in_features} input features, got {features.shape}")
    if model.neighborhood == "self":
        graph = self_loop_graph(graph.num_nodes)
    elif not graph.has_self_loops():
        graph = graph.with_self_loops()
    h = np.asarray(features, dtype=model.dtype)
    caches = []
    for idx, (cfg, p) in enumerate(zip(model.configs, model.params)):
        h, cache = layer.forward(h, p, cfg, graph, training, rng, masks[idx] if masks else None)
        caches.append(cache)
    return h, ForwardCaches(model, graph, caches)


def model_backward(model, caches, grad_logits):
    """Backpropagate through every layer. Returns ``(grads, grad_features)``.

    ``grads`` is a list of per-layer dicts keyed like ``model.params``. No
    weight penalty is included here.
    """
    if caches.model is not model or len(caches.layers) != len(model.configs):
        raise ContractError("caches do not belong to this model")
    grads = [None] * len(model.configs)
    g = grad_logits
    for idx in reversed(range(len(model.configs))):
        g, grads[idx] = layer.backward(g, caches.layers[idx], model.params[idx], model.configs[idx], caches.graph)
    return grads, g


def _check_mask(mask, n):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeError(f"mask must have {n} entries")
    count = int(mask.sum())
    if count == 0:
        raise DataError("loss mask selects no nodes")
    return mask, count


def softmax_cross_entropy(logits, labels, mask):
    """Mean cross-entropy over masked nodes. Returns ``(loss, grad_logits)``."""
    n, c = logits.shape
    mask, count = _check_mask(mask, n)
    labels = np.asarray(labels)
    sel = labels[mask]
    if sel.size and (sel.min() < 0 or sel.max() >= c):
        raise DataError(f"class id outside [0, {c})")
    z = logits[mask]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_prob = shifted - log_norm
    rows = np.arange(count)
    loss = -tensor.scalar_sum(log_prob[rows, sel]) / count
    probs = np.exp(log_prob)
    probs[rows, sel] -= 1
    grad = np.zeros_like(logits)
    grad[mask] = probs / logits.dtype.type(count)
    return loss, grad


def sigmoid_bce(logits, label_matrix, mask):
    """Mean binary cross-entropy over masked node/label pairs, in stable logit form."""
    n, c = logits.shape
    mask, count = _check_mask(mask, n)
    y = np.asarray(label_matrix)
    if y.shape != logits.shape:
        raise ShapeError(f"label matrix {y.shape} does not match logits {logits.shape}")
    y = y[mask]
    if np.any((y != 0) & (y != 1)):
        raise DataError("multi-label targets must be 0/1")
    z = logits[mask]
    y = y.astype(z.dtype)
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    total = count * c
    loss = tensor.scalar_sum(per) / total
    grad = np.zeros_like(logits)
    grad[mask] = (tensor.sigmoid(z) - y) / logits.dtype.type(total)
    return loss, grad


def task_loss(model, logits, labels, mask):
    if model.task == "single-label":
        return softmax_cross_entropy(logits, labels, mask)
    return sigmoid_bce(logits, labels, mask)


# --- checkpoint container -------------------------------------------------

CHECKPOINT_MAGIC = b"GATW"
CHECKPOINT_VERSION = 1
_LAYER_RECORD = "IIIBBBBBBddd"


def _code(value, choices, what):
    try:
        return choices.index(value)
    except ValueError:
        raise ConfigError(f"cannot encode {what} {value!r}") from None


def _decode(code, choices, what, offset):
    if code >= len(choices):
        raise FormatError(f"invalid {what} code {code}", offset=offset)
    return choices[code]


def checkpoint_bytes(model):
    out = [binio.pack("4sIIBB", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(model.configs),
                      TASKS.index(model.task), NEIGHBORHOODS.index(model.neighborhood))]
    for cfg, p in zip(model.configs, model.params):
        out.append(binio.pack(
            _LAYER_RECORD,
            cfg.in_features, cfg.out_features, cfg.num_heads,
            _code(cfg.merge, layer.MERGES, "merge"),
            _code(cfg.attention, layer.ATTENTIONS, "attention"),
            _code(cfg.activation, layer.ACTIVATIONS, "activation"),
            _code(cfg.skip, layer.SKIPS, "skip"),
            int(cfg.use_bias), int(cfg.output_layer),
            cfg.leaky_slope, cfg.input_dropout, cfg.attn_dropout,
        ))
        for key in layer.param_shapes(cfg):
            out.append(binio.le_bytes(p[key], np.float32))
    return b"".join(out)


def model_from_bytes(buf):
    r = binio.Reader(buf, "checkpoint")
    magic, version, count, task, nbhd = r.unpack("4sIIBB", "header")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    if count < 1 or count > 1024:
        raise FormatError(f"implausible layer count {count}", offset=8)
    task = _decode(task, TASKS, "task", 12)
    nbhd = _decode(nbhd, NEIGHBORHOODS, "neighborhood", 13)
    configs, params = [], []
    for _ in range(count):
        at = r.pos
        rec = r.unpack(_LAYER_RECORD, "layer config")
        try:
            cfg = GatLayerConfig(
                in_features=rec[0], out_features=rec[1], num_heads=rec[2],
                merge=_decode(rec[3], layer.MERGES, "merge", at),
                attention=_decode(rec[4], layer.ATTENTIONS, "attention", at),
                activation=_decode(rec[5], layer.ACTIVATIONS, "activation", at),
                skip=_decode(rec[6], layer.SKIPS, "skip", at),
                use_bias=bool(rec[7]), output_layer=bool(rec[8]),
                leaky_slope=rec[9], input_dropout=rec[10], attn_dropout=rec[11],
            )
        except ConfigError as exc:
            raise FormatError(f"invalid layer config: {exc}", offset=at) from None
        p = {}
        for key, shape in layer.param_shapes(cfg).items():
            p[key] = r.array(np.float32, int(np.prod(shape)), f"tensor {key}").reshape(shape)
        configs.append(cfg)
        params.append(p)
    r.finish()
    try:
        return GatModel(configs, params, task, nbhd)
    except (ConfigError, ShapeError) as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}") from None


def save_checkpoint(model, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def with_attention(model, attention):
    """Same parameters, different attention mode (shares arrays)."""
    configs = [replace(c, attention=attention) for c in model.configs]
    return GatModel(configs, model.params, model.task, model.neighborhood)
