"""Dataset I/O and synthetic graph generators.

Binary bundle layout (all integers little-endian unsigned 32-bit)::

    magic "GATB" | version | flags | N | E_raw | F | C
    row_offsets[N + 1] | col_indices[row_offsets[N]]
    features[N * F]            float32, row-major
    labels                     N class ids (u32) or N * C bytes of 0/1 (multi-label)
    train, val, test masks     ceil(N / 8) bytes each, LSB-first bitsets

``flags`` bit 0 marks a directed graph, bit 1 a multi-label task. The stored
CSR graph is the processed one (symmetrised if undirected, self-loops in);
``E_raw`` is the edge count of the source data before processing.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio, tensor
from .errors import ConfigError, FormatError, GatError, ValidationError
from .graph import CsrGraph, GraphBundle, from_edge_list, read_edge_list

log = logging.getLogger(__name__)

BUNDLE_MAGIC = b"GATB"
BUNDLE_VERSION = 1
FLAG_DIRECTED = 1
FLAG_MULTILABEL = 2
_HEADER = "4sIIIIII"


def bundle_bytes(bundle):
    n = bundle.num_nodes
    flags = (FLAG_DIRECTED if bundle.directed else 0) | (FLAG_MULTILABEL if bundle.multilabel else 0)
    parts = [
        binio.pack(_HEADER, BUNDLE_MAGIC, BUNDLE_VERSION, flags, n, bundle.raw_edges,
                   bundle.num_features, bundle.num_classes),
        binio.le_bytes(bundle.graph.row_offsets, np.uint32),
        binio.le_bytes(bundle.graph.col_indices, np.uint32),
        binio.le_bytes(bundle.features, np.float32),
        binio.le_bytes(bundle.labels, np.uint8 if bundle.multilabel else np.uint32),
    ]
    for m in (bundle.train_mask, bundle.val_mask, bundle.test_mask):
        parts.append(np.packbits(m, bitorder="little").tobytes())
    return b"".join(parts)


def bundle_from_bytes(buf, name=""):
    r = binio.Reader(buf, "bundle")
    magic, version, flags, n, raw_edges, f, c = r.unpack(_HEADER, "header")
    if magic != BUNDLE_MAGIC:
        raise FormatError(f"bad bundle magic {magic!r}", offset=0)
    if version != BUNDLE_VERSION:
        raise FormatError(f"unsupported bundle version {version}", offset=4)
    if flags & ~(FLAG_DIRECTED | FLAG_MULTILABEL):
        raise FormatError(f"unknown flag bits {flags:#x}", offset=8)
    multilabel = bool(flags & FLAG_MULTILABEL)
    offsets = r.array(np.uint32, n + 1, "row_offsets").astype(np.int64)
    at = r.pos
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
        raise FormatError("row_offsets must start at 0 and be nondecreasing", offset=at)
    cols = r.array(np.uint32, int(offsets[-1]), "col_indices").astype(np.int64)
    feats = r.array(np.float32, n * f, "features").reshape(n, f)
    if multilabel:
        labels = r.array(np.uint8, n * c, "label matrix").reshape(n, c)
    else:
        labels = r.array(np.uint32, n, "labels").astype(np.int64)
    nbytes = (n + 7) // 8
    masks = [
        np.unpackbits(r.array(np.uint8, nbytes, f"{m} mask"), count=n, bitorder="little").astype(bool)
        for m in ("train", "val", "test")
    ]
    r.finish()
    try:
        graph = CsrGraph(n, offsets, cols)
        bundle = GraphBundle(graph, feats, labels, c, *masks, multilabel=multilabel,
                             directed=bool(flags & FLAG_DIRECTED), raw_edges=raw_edges, name=name)
    except GatError as exc:
        raise FormatError(f"invalid bundle contents: {exc}") from None
    log.info("loaded %s: N=%d raw_edges=%d processed_edges=%d F=%d C=%d",
             name or "bundle", n, raw_edges, graph.num_edges, f, c)
    return bundle


def save_bundle(bundle, path):
    Path(path).write_bytes(bundle_bytes(bundle))


def load_bundle(path):
    path = Path(path)
    return bundle_from_bytes(path.read_bytes(), name=path.stem)


# --- text import ----------------------------------------------------------

def _read_rows(path, parse, what):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([parse(tok) for tok in line.split()])
            except ValueError:
                raise FormatError(f"{path}: malformed {what}", offset=f"line {lineno}") from None
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"{path}: expected {len(rows[0])} values, got {len(rows[-1])}", offset=f"line {lineno}"
                )
    return rows


def read_masks(path, num_nodes):
    """Parse split lines ``train|val|test <id> <id> ...`` into three boolean masks."""
    masks = {k: np.zeros(num_nodes, dtype=bool) for k in ("train", "val", "test")}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, *ids = line.split()
            if name not in masks:
                raise FormatError(f"{path}: unknown split {name!r}", offset=f"line {lineno}")
            try:
                idx = np.array([int(t) for t in ids], dtype=np.int64)
            except ValueError:
                raise FormatError(f"{path}: non-integer node id", offset=f"line {lineno}") from None
            if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
                raise FormatError(f"{path}: node id outside [0, {num_nodes})", offset=f"line {lineno}")
            masks[name][idx] = True
    tr, va, te = masks["train"], masks["val"], masks["test"]
    if np.any(tr & va) or np.any(tr & te) or np.any(va & te):
        raise ValidationError(f"{path}: train/val/test id lists overlap")
    return tr, va, te


def import_text(edges_path, features_path, labels_path, masks_path,
                directed=False, multilabel=False, num_classes=None, name=""):
    """Build a bundle from delimited text files.

    * edges: ``src<TAB>dst`` per line
    * features: one row of decimal floats per node
    * labels: one class id per node, or one row of 0/1 flags when ``multilabel``
    * masks: lines ``train|val|test`` followed by node ids

    Undirected inputs are symmetrised; self-loops are always inserted.
    """
    feats = np.array(_read_rows(features_path, float, "feature row"), dtype=np.float32)
    n = feats.shape[0]
    lab_rows = _read_rows(labels_path, int, "label row")
    if len(lab_rows) != n:
        raise ValidationError(f"{labels_path}: {len(lab_rows)} label rows for {n} feature rows")
    if multilabel:
        labels = np.array(lab_rows, dtype=np.int64)
        if np.any((labels != 0) & (labels != 1)):
            raise ValidationError(f"{labels_path}: multi-label rows must be 0/1")
        labels = labels.astype(np.uint8)
        c = labels.shape[1]
    else:
        if lab_rows and len(lab_rows[0]) != 1:
            raise ValidationError(f"{labels_path}: expected one class id per line")
        labels = np.array(lab_rows, dtype=np.int64).reshape(-1)
        c = int(labels.max()) + 1 if labels.size else 0
    if num_classes is not None:
        if num_classes < c:
            raise ValidationError(f"labels use {c} classes but num_classes={num_classes}")
        c = num_classes
    edges = read_edge_list(edges_path)
    if edges.size and edges.max() >= n:
        raise ValidationError(f"{edges_path}: node id {int(edges.max())} but only {n} feature rows")
    graph = from_edge_list(n, edges, symmetrize=not directed, add_self_loops=True)
    masks = read_masks(masks_path, n)
    log.info("imported %s: N=%d raw_edges=%d processed_edges=%d", name or edges_path, n, len(edges), graph.num_edges)
    return GraphBundle(graph, feats, labels, c, *masks, multilabel=multilabel,
                       directed=directed, raw_edges=len(edges), name=name)


def export_text(bundle, directory):
    """Inverse of :func:`import_text` (edges are the stored processed edges)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    e = bundle.graph.edge_list()
    np.savetxt(d / "edges.txt", e, fmt="%d", delimiter="\t")
    np.savetxt(d / "features.txt", bundle.features, fmt="%.9g")
    np.savetxt(d / "labels.txt", bundle.labels.reshape(bundle.num_nodes, -1), fmt="%d")
    with open(d / "masks.txt", "w") as fh:
        for name, m in (("train", bundle.train_mask), ("val", bundle.val_mask), ("test", bundle.test_mask)):
            fh.write(name + " " + " ".join(map(str, np.flatnonzero(m))) + "\n")
    return {k: d / f"{k}.txt" for k in ("edges", "features", "labels", "masks")}


# --- synthetic data -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a generated node-classification graph.

    ``edge_density`` is the number of noise in-neighbours per node
    (neighbor-vote) or the expected degree (planted-classes).
    """

    generator: str = "neighbor-vote"
    num_nodes: int = 2000
    num_features: int = 40
    num_classes: int = 4
    edge_density: float = 6.0
    noise: float = 0.0
    seed: int = 0
    train_frac: float = 0.5
    val_frac: float = 0.2

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; choose from {sorted(GENERATORS)}")
        if self.num_nodes < self.num_classes or self.num_classes < 2:
            raise ConfigError("need num_nodes >= num_classes >= 2")
        if self.generator == "neighbor-vote" and self.num_features < self.num_classes + 1:
            raise ConfigError("neighbor-vote needs num_features >= num_classes + 1")
        if not (0 < self.train_frac and 0 < self.val_frac and self.train_frac + self.val_frac < 1):
            raise ConfigError("train_frac and val_frac must be positive and sum below 1")
        if self.edge_density < 0 or self.noise < 0:
            raise ConfigError("edge_density and noise must be nonnegative")


def _balanced(n, c, rng):
    return rng.permutation(np.arange(n) % c)


def _split(candidates, spec, rng, n):
    idx = rng.permutation(candidates)
    n_tr = int(round(spec.train_frac * len(idx)))
    n_va = int(round(spec.val_frac * len(idx)))
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][idx[:n_tr]] = True
    masks[1][idx[n_tr:n_tr + n_va]] = True
    masks[2][idx[n_tr + n_va:]] = True
    return masks


def neighbor_vote(spec):
    """Labels that only one designated in-neighbour can reveal.

    A quarter of the nodes are informants: a marker feature is 1 and ``C``
    features one-hot encode their own class. Every other node has marker 0
    and a one-hot of a random class (pure noise), and receives
    edges from exactly one informant (its label source) plus
    ``edge_density`` random non-informant nodes. Informants also receive
    ``edge_density`` noise edges. Uniform neighbourhood averaging dilutes the
    informant among the noise; attention keyed on the marker recovers it.
    The ``[marker, one-hot]`` block is repeated cyclically over all
    ``num_features`` columns (column ``d`` copies block entry ``d % (C + 1)``).
    Only non-informant nodes appear in the train/val/test masks. The graph
    is directed (edges run informant -> receiver).
    """
    rng = tensor.make_rng(spec.seed, tensor.STREAM_DATA)
    n, c, f = spec.num_nodes, spec.num_classes, spec.num_features
    n_inf = max(c, n // 4)
    inf_ids = np.arange(n_inf)
    reg_ids = np.arange(n_inf, n)
    inf_class = _balanced(n_inf, c, rng)
    labels = np.empty(n, dtype=np.int64)
    labels[inf_ids] = inf_class
    labels[reg_ids] = _balanced(len(reg_ids), c, rng)

    block = np.zeros((n, c + 1), dtype=np.float64)
    block[inf_ids, 0] = 1.0
    block[inf_ids, 1 + inf_class] = 1.0
    block[reg_ids, 1 + rng.integers(0, c, size=len(reg_ids))] = 1.0
    # tile the block across the feature width so it survives input dropout
    feats = block[:, np.arange(f) % (c + 1)]

    by_class = [inf_ids[inf_class == k] for k in range(c)]
    src = [np.array([rng.choice(by_class[k]) for k in labels[reg_ids]], dtype=np.int64)]
    dst = [reg_ids]
    d = int(round(spec.edge_density))
    if d and len(reg_ids) > 1:
        for receivers in (reg_ids, inf_ids):
            senders = rng.choice(reg_ids, size=(len(receivers), d))
            src.append(senders.reshape(-1))
            dst.append(np.repeat(receivers, d))
    edges = np.stack([np.concatenate(src), np.concatenate(dst)], axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    if spec.noise:
        feats += spec.noise * rng.standard_normal(feats.shape)
    graph = from_edge_list(n, edges, symmetrize=False, add_self_loops=True)
    masks = _split(reg_ids, spec, rng, n)
    return GraphBundle(graph, feats.astype(np.float32), labels, c, *masks, directed=True,
                       raw_edges=len(edges), name=f"neighbor-vote-{spec.seed}",
                       extra={"informants": inf_ids})


def planted_classes(spec):
    """Undirected stochastic block model with class-centred Gaussian features.

    Roughly 80% of each node's expected ``edge_density`` edges stay inside its
    class; features are the class centroid plus ``noise``-scaled Gaussian noise.
    """
    rng = tensor.make_rng(spec.seed, tensor.STREAM_DATA)
    n, c, f = spec.num_nodes, spec.num_classes, spec.num_features
    labels = _balanced(n, c, rng)
    m = int(round(spec.edge_density * n / 2))
    members = [np.flatnonzero(labels == k) for k in range(c)]
    src = rng.integers(0, n, size=m)
    same = rng.random(m) < 0.8
    dst = rng.integers(0, n, size=m)
    for k in range(c):
        pick = same & (labels[src] == k)
        dst[pick] = rng.choice(members[k], size=int(pick.sum()))
    edges = np.stack([src, dst], axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    centroids = rng.standard_normal((c, f))
    feats = centroids[labels] + spec.noise * rng.standard_normal((n, f))
    graph = from_edge_list(n, edges, symmetrize=True, add_self_loops=True)
    masks = _split(np.arange(n), spec, rng, n)
    return GraphBundle(graph, feats.astype(np.float32), labels, c, *masks,
                       raw_edges=len(edges), name=f"planted-classes-{spec.seed}")


GENERATORS = {"neighbor-vote": neighbor_vote, "planted-classes": planted_classes}


def generate_synthetic(spec):
    spec.validate()
    return GENERATORS[spec.generator](spec)


def multilabel_graphs(count, num_nodes=60, num_features=8, num_classes=5, seed=0, degree=4.0):
    """Small random multi-label graphs for inductive tests.

    A node's label ``k`` is on when the mean of feature ``k`` over its
    neighbourhood is positive, so the task needs the graph.
    """
    out = []
    for g in range(count):
        rng = tensor.make_rng(seed, tensor.STREAM_DATA + 16 + g)
        m = int(degree * num_nodes / 2)
        edges = rng.integers(0, num_nodes, size=(m, 2))
        edges = edges[edges[:, 0] != edges[:, 1]]
        graph = from_edge_list(num_nodes, edges, symmetrize=True, add_self_loops=True)
        feats = rng.standard_normal((num_nodes, num_features)).astype(np.float32)
        summed = np.zeros((num_nodes, num_classes))
        np.add.at(summed, graph.row_ids, feats[graph.col_indices, :num_classes])
        labels = (summed > 0).astype(np.uint8)
        none = np.zeros(num_nodes, dtype=bool)
        out.append(GraphBundle(graph, feats, labels, num_classes, ~none, none, none,
                               multilabel=True, raw_edges=len(edges), name=f"ml-{seed}-{g}"))
    return out
