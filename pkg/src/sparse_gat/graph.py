"""Sparse graph storage (CSR), node-classification bundles and multi-graph batching.

Row ``i`` of a :class:`CsrGraph` lists the neighbourhood of node ``i``: every
node ``j`` whose message reaches ``i``. An edge ``(src, dst)`` therefore lands
in row ``dst`` at column ``src``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError, FormatError, ShapeError, ValidationError


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrGraph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        self.validate()

    def validate(self):
        n, ro, ci = self.num_nodes, self.row_offsets, self.col_indices
        if n < 0:
            raise ValidationError(f"negative node count {n}")
        if ro.ndim != 1 or ro.shape[0] != n + 1:
            raise ValidationError(f"row_offsets must have {n + 1} entries, got {ro.shape}")
        if ro[0] != 0 or ro[-1] != ci.shape[0]:
            raise ValidationError("row_offsets must start at 0 and end at len(col_indices)")
        if np.any(np.diff(ro) < 0):
            raise ValidationError("row_offsets must be nondecreasing")
        if ci.size:
            if ci.min() < 0 or ci.max() >= n:
                raise ValidationError("column index out of range")
            # strictly increasing inside each row: a non-increase is only
            # allowed where a new row starts
            bad = np.flatnonzero(np.diff(ci) <= 0) + 1
            if bad.size and not np.all(np.isin(bad, ro[1:-1])):
                raise ValidationError("row columns must be strictly increasing (sorted, deduplicated)")

    @property
    def num_edges(self):
        return int(self.col_indices.shape[0])

    @cached_property
    def degrees(self):
        return np.diff(self.row_offsets)

    @cached_property
    def row_ids(self):
        """Row (receiving node) of every stored edge, aligned with ``col_indices``."""
        out = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        out.setflags(write=False)
        return out

    def neighbors(self, i):
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edge_list(self):
        """Stored edges as an ``(E, 2)`` array of ``(src, dst)`` pairs."""
        return np.stack([self.col_indices, self.row_ids], axis=1)

    def has_self_loops(self):
        """True when every node is its own neighbour."""
        if self.num_nodes == 0:
            return True
        hit = np.zeros(self.num_nodes, dtype=bool)
        loops = self.col_indices == self.row_ids
        hit[self.row_ids[loops]] = True
        return bool(hit.all())

    def with_self_loops(self):
        if self.has_self_loops():
            return self
        loops = np.arange(self.num_nodes)
        return from_edge_list(
            self.num_nodes,
            np.concatenate([self.edge_list(), np.stack([loops, loops], axis=1)]),
        )

    def permuted(self, perm):
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm)
        e = self.edge_list()
        return from_edge_list(self.num_nodes, perm[e])

    def __eq__(self, other):
        return (
            isinstance(other, CsrGraph)
            and self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )


def from_edge_list(num_nodes, edges, symmetrize=False, add_self_loops=False):
    """Build a CSR graph from ``(src, dst)`` pairs.

    Rows come out sorted and deduplicated. ``symmetrize`` adds the reverse of
    every edge; ``add_self_loops`` guarantees ``(i, i)`` for all nodes.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise ValidationError(f"edge endpoint outside [0, {num_nodes})")
    if symmetrize:
        e = np.concatenate([e, e[:, ::-1]])
    if add_self_loops:
        loops = np.arange(num_nodes, dtype=np.int64)
        e = np.concatenate([e, np.stack([loops, loops], axis=1)])
    src, dst = e[:, 0], e[:, 1]
    # unique over (dst, src) keys sorts by row then column
    key = np.unique(dst * num_nodes + src) if e.size else np.zeros(0, dtype=np.int64)
    rows, cols = np.divmod(key, max(num_nodes, 1))
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return CsrGraph(num_nodes, offsets, cols)


def self_loop_graph(num_nodes):
    """Graph whose only edges are self-loops (every neighbourhood is ``{i}``)."""
    return CsrGraph(num_nodes, np.arange(num_nodes + 1), np.arange(num_nodes))


def read_edge_list(path):
    """Parse a ``src<TAB>dst`` text edge list (0-based ids, ``#`` comments)."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}: expected 'src<TAB>dst'", offset=f"line {lineno}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise FormatError(f"{path}: non-integer node id", offset=f"line {lineno}") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def write_edge_list(path, edges):
    with open(path, "w") as fh:
        for s, d in np.asarray(edges).reshape(-1, 2):
            fh.write(f"{s}\t{d}\n")


@dataclass(frozen=True, eq=False)
class GraphBundle:
    """One graph with features, labels and disjoint train/val/test masks.

    ``labels`` is an ``(N,)`` integer class array for single-label tasks, or
    an ``(N, C)`` 0/1 ``uint8`` matrix when ``multilabel`` is set.
    ``raw_edges`` records the edge count of the source data before
    symmetrisation and self-loop insertion.
    """

    graph: CsrGraph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    multilabel: bool = False
    directed: bool = False
    raw_edges: int = -1
    name: str = ""
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.graph.num_nodes
        feats = np.asarray(self.features)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ShapeError(f"features must be {n} x F, got {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.multilabel:
            labels = np.asarray(self.labels, dtype=np.uint8)
            if labels.shape != (n, self.num_classes):
                raise ShapeError(f"label matrix must be {n} x {self.num_classes}, got {labels.shape}")
            if labels.size and labels.max() > 1:
                raise DataError("multi-label targets must be 0/1")
        else:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ShapeError(f"labels must have {n} entries, got {labels.shape}")
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise DataError(f"class id outside [0, {self.num_classes})")
        object.__setattr__(self, "labels", labels)
        masks = []
        for m in (self.train_mask, self.val_mask, self.test_mask):
            m = np.asarray(m, dtype=bool)
            if m.shape != (n,):
                raise ShapeError(f"masks must have {n} entries, got {m.shape}")
            masks.append(m)
        tr, va, te = masks
        if np.any(tr & va) or np.any(tr & te) or np.any(va & te):
            raise ValidationError("train/val/test masks must be disjoint")
        object.__setattr__(self, "train_mask", tr)
        object.__setattr__(self, "val_mask", va)
        object.__setattr__(self, "test_mask", te)
        if self.raw_edges < 0:
            object.__setattr__(self, "raw_edges", self.graph.num_edges)

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    @property
    def num_features(self):
        return self.features.shape[1]

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return GraphBundle(**kw)


@dataclass(frozen=True, eq=False)
class MultiGraphBatch:
    bundle: GraphBundle
    graph_boundaries: np.ndarray

    def slice(self, g):
        """Node range of constituent graph ``g``."""
        return slice(int(self.graph_boundaries[g]), int(self.graph_boundaries[g + 1]))


def disjoint_union(bundles):
    """Concatenate bundles into one block-diagonal graph with per-graph node offsets."""
    if not bundles:
        raise ValidationError("disjoint_union needs at least one bundle")
    first = bundles[0]
    for b in bundles[1:]:
        if b.num_features != first.num_features:
            raise ShapeError(f"feature width mismatch: {b.num_features} vs {first.num_features}")
        if b.multilabel != first.multilabel or b.num_classes != first.num_classes:
            raise ShapeError("label arity mismatch across bundles")
    if len(bundles) == 1:
        return MultiGraphBatch(first, np.array([0, first.num_nodes]))
    sizes = np.array([b.num_nodes for b in bundles])
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    edge_offsets = np.cumsum([0] + [b.graph.num_edges for b in bundles])
    row_offsets = np.concatenate(
        [[0]] + [b.graph.row_offsets[1:] + edge_offsets[g] for g, b in enumerate(bundles)]
    )
    col_indices = np.concatenate([b.graph.col_indices + bounds[g] for g, b in enumerate(bundles)])
    union = GraphBundle(
        graph=CsrGraph(int(bounds[-1]), row_offsets, col_indices),
        features=np.concatenate([b.features for b in bundles]),
        labels=np.concatenate([b.labels for b in bundles]),
        num_classes=first.num_classes,
        train_mask=np.concatenate([b.train_mask for b in bundles]),
        val_mask=np.concatenate([b.val_mask for b in bundles]),
        test_mask=np.concatenate([b.test_mask for b in bundles]),
        multilabel=first.multilabel,
        directed=any(b.directed for b in bundles),
        raw_edges=sum(b.raw_edges for b in bundles),
        name="+".join(b.name for b in bundles),
    )
    return MultiGraphBatch(union, bounds)
