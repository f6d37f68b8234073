"""Adam, weight decay, early stopping and the transductive/inductive training loops."""

import csv
import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor
from .errors import ConfigError, DataError, ShapeError
from .graph import disjoint_union
from .metrics import f1_counts, f1_from_counts, masked_accuracy
from .model import get_preset, model_backward, model_forward, task_loss

log = logging.getLogger(__name__)

# parameter keys that receive the L2 penalty; biases are exempt
PENALIZED = ("W", "att_self", "att_neigh", "skip")


@dataclass
class TrainConfig:
    """Training recipe. ``lr``/``l2_lambda``/``patience``/``batch_graphs`` left as
    ``None`` are taken from the preset."""

    preset: str = "cora-citeseer"
    lr: float = None
    l2_lambda: float = None
    max_epochs: int = 100_000
    patience: int = None
    seed: int = 0
    batch_graphs: int = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def resolve(self, preset):
        out = TrainConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for key in ("lr", "l2_lambda", "patience", "batch_graphs"):
            if getattr(out, key) is None:
                setattr(out, key, getattr(preset, key))
        if out.lr <= 0:
            raise ConfigError("lr must be positive")
        if out.l2_lambda < 0:
            raise ConfigError("l2_lambda must be nonnegative")
        if out.patience < 1:
            raise ConfigError("patience must be at least 1")
        if out.batch_graphs < 1 or out.max_epochs < 1:
            raise ConfigError("batch_graphs and max_epochs must be positive")
        return out


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        m = [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
        v = [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
        return cls(m, v, 0, beta1, beta2, eps)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        for key, theta in p.items():
            grad = g[key]
            if grad.shape != theta.shape:
                raise ShapeError(f"gradient shape {grad.shape} != parameter shape {theta.shape} for {key}")
            dt = theta.dtype.type
            m[key] *= dt(b1)
            m[key] += dt(1.0 - b1) * grad
            v[key] *= dt(b2)
            v[key] += dt(1.0 - b2) * grad * grad
            m_hat = m[key] / dt(c1)
            v_hat = v[key] / dt(c2)
            theta -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(state.eps))
    return state


def apply_l2(grads, params, l2_lambda):
    """Add the gradient ``2 * lambda * theta`` of ``lambda * ||theta||^2`` to weight tensors."""
    if l2_lambda < 0:
        raise ConfigError("l2_lambda must be nonnegative")
    out = []
    for g, p in zip(grads, params):
        g = dict(g)
        if l2_lambda:
            for key in PENALIZED:
                if key in p:
                    g[key] = g[key] + p[key].dtype.type(2 * l2_lambda) * p[key]
        out.append(g)
    return out


def _squared_norm(a):
    a = a.astype(np.result_type(a.dtype, np.float64), copy=False)
    return tensor.scalar_sum(a * a)


def l2_penalty(params, l2_lambda):
    return l2_lambda * sum(_squared_norm(p[k]) for p in params for k in PENALIZED if k in p)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    seconds: float


class EarlyStopping:
    """Patience counter reset by an improvement in validation loss OR metric.

    The kept snapshot is the epoch with the best metric; ties go to the lower
    validation loss, then to the earlier epoch.
    """

    def __init__(self, patience):
        self.patience = patience
        self.best_loss = np.inf
        self.best_metric = -np.inf
        self.wait = 0
        self.best_epoch = 0
        self.snapshot = None
        self._sel = (-np.inf, np.inf)

    def update(self, epoch, val_loss, val_metric, params):
        """Record an epoch; returns True when training should stop."""
        improved = val_loss < self.best_loss or val_metric > self.best_metric
        self.best_loss = min(self.best_loss, val_loss)
        self.best_metric = max(self.best_metric, val_metric)
        sel_metric, sel_loss = self._sel
        if val_metric > sel_metric or (val_metric == sel_metric and val_loss < sel_loss):
            self._sel = (val_metric, val_loss)
            self.best_epoch = epoch
            self.snapshot = [{k: a.copy() for k, a in p.items()} for p in params]
        self.wait = 0 if improved else self.wait + 1
        return self.wait >= self.patience


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    config: TrainConfig = None

    @property
    def epochs_run(self):
        return len(self.history)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_metric", "seconds"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_metric), f"{r.seconds:.6f}"])


def read_history(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                    float(r["val_metric"]), float(r["seconds"]))
        for r in rows
    ]


def evaluate(model, bundle, mask):
    """Eval-mode ``(loss, metric)`` on ``mask``: accuracy or micro-F1 by task."""
    logits, _ = model_forward(model, bundle)
    loss, _ = task_loss(model, logits, bundle.labels, mask)
    if model.task == "single-label":
        return loss, masked_accuracy(logits, bundle.labels, mask).value
    return loss, f1_from_counts(*f1_counts(logits, bundle.labels, mask))


def evaluate_graphs(model, bundles):
    """Pool loss and metric over every node of several graphs."""
    loss_sum, weight, correct, total = 0.0, 0, 0, 0
    tp = fp = fn = 0
    for b in bundles:
        mask = np.ones(b.num_nodes, dtype=bool)
        logits, _ = model_forward(model, b)
        loss, _ = task_loss(model, logits, b.labels, mask)
        loss_sum += loss * b.num_nodes
        weight += b.num_nodes
        if model.task == "single-label":
            rep = masked_accuracy(logits, b.labels, mask)
            correct += round(rep.value * rep.count)
            total += rep.count
        else:
            a, c, d = f1_counts(logits, b.labels, mask)
            tp, fp, fn = tp + a, fp + c, fn + d
    metric = correct / total if model.task == "single-label" else f1_from_counts(tp, fp, fn)
    return loss_sum / weight, metric


def _setup(config, num_features, num_classes, model):
    preset = get_preset(config.preset, num_features, num_classes)
    cfg = config.resolve(preset)
    if model is None:
        model = preset.build(tensor.make_rng(cfg.seed, tensor.STREAM_INIT))
    return cfg, model


def _step(model, state, cfg, logits, caches, labels, mask):
    loss, g = task_loss(model, logits, labels, mask)
    if not np.isfinite(loss):
        raise FloatingPointError("training loss diverged")
    grads, _ = model_backward(model, caches, g)
    grads = apply_l2(grads, model.params, cfg.l2_lambda)
    adam_step(model.params, grads, state, cfg.lr)
    return loss


def train_transductive(bundle, config, model=None):
    """Full-batch training on one graph; loss on the train mask, early stopping on val.

    Returns the model restored to its best validation epoch.
    """
    if not bundle.train_mask.any() or not bundle.val_mask.any():
        raise DataError("transductive training needs nonempty train and val masks")
    cfg, model = _setup(config, bundle.num_features, bundle.num_classes, model)
    rng = tensor.make_rng(cfg.seed, tensor.STREAM_DROPOUT)
    state = AdamState.zeros(model.params, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience)
    result = TrainResult(model, config=cfg)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        logits, caches = model_forward(model, bundle, rng, training=True)
        train_loss = _step(model, state, cfg, logits, caches, bundle.labels, bundle.train_mask)
        val_loss, val_metric = evaluate(model, bundle, bundle.val_mask)
        result.history.append(EpochRecord(epoch, train_loss, val_loss, val_metric, time.perf_counter() - t0))
        if epoch % 50 == 0:
            log.info("epoch %d train_loss %.4f val_loss %.4f val_metric %.4f", epoch, train_loss, val_loss, val_metric)
        if stopper.update(epoch, val_loss, val_metric, model.params):
            break
    model.params[:] = stopper.snapshot
    result.best_epoch = stopper.best_epoch
    return result


def train_inductive(train_bundles, val_bundles, config, model=None):
    """Mini-batches of whole graphs (disjoint unions); every training node is supervised.

    Graph order is reshuffled each epoch; a trailing short batch is kept.
    Validation pools loss and metric over all nodes of the held-out graphs.
    """
    if not train_bundles or not val_bundles:
        raise DataError("inductive training needs at least one train and one val graph")
    first = train_bundles[0]
    for b in list(train_bundles) + list(val_bundles):
        if b.num_features != first.num_features:
            raise ShapeError(f"feature width mismatch: {b.num_features} vs {first.num_features}")
    cfg, model = _setup(config, first.num_features, first.num_classes, model)
    shuffle = tensor.make_rng(cfg.seed, tensor.STREAM_SHUFFLE)
    rng = tensor.make_rng(cfg.seed, tensor.STREAM_DROPOUT)
    state = AdamState.zeros(model.params, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience)
    result = TrainResult(model, config=cfg)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle.permutation(len(train_bundles))
        losses = []
        for s in range(0, len(order), cfg.batch_graphs):
            batch = disjoint_union([train_bundles[i] for i in order[s:s + cfg.batch_graphs]]).bundle
            logits, caches = model_forward(model, batch, rng, training=True)
            mask = np.ones(batch.num_nodes, dtype=bool)
            losses.append(_step(model, state, cfg, logits, caches, batch.labels, mask))
        val_loss, val_metric = evaluate_graphs(model, val_bundles)
        result.history.append(
            EpochRecord(epoch, float(np.mean(losses)), val_loss, val_metric, time.perf_counter() - t0)
        )
        log.info("epoch %d train_loss %.4f val_loss %.4f val_metric %.4f",
                 epoch, losses[-1], val_loss, val_metric)
        if stopper.update(epoch, val_loss, val_metric, model.params):
            break
    model.params[:] = stopper.snapshot
    result.best_epoch = stopper.best_epoch
    return result
