"""Bundle and checkpoint files, text import, and attention export.

Everything the command-line tool reads or writes is available from Python.
Files go to a temporary directory.
"""

import tempfile
from pathlib import Path

import numpy as np

from sparse_gat import data, model
from sparse_gat import layer as L
from sparse_gat import tensor as T

toy = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "toy3"

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    bundle = data.import_text(toy / "edges.txt", toy / "features.txt", toy / "labels.txt", toy / "masks.txt")
    print(f"text import: {bundle.raw_edges} raw edges became {bundle.graph.num_edges} stored edges")

    data.save_bundle(bundle, tmp / "toy.gatb")
    again = data.load_bundle(tmp / "toy.gatb")
    print("bundle round trip identical:", data.bundle_bytes(again) == (tmp / "toy.gatb").read_bytes())

    mdl = model.get_preset("cora-citeseer", bundle.num_features, bundle.num_classes).build(T.make_rng(0))
    model.save_checkpoint(mdl, tmp / "m.gatw")
    back = model.load_checkpoint(tmp / "m.gatw")
    same = all(np.array_equal(a[k], b[k]) for a, b in zip(mdl.params, back.params) for k in a)
    print("checkpoint round trip identical:", same)

    _, caches = model.forward_arrays(back, bundle.features, bundle.graph)
    L.export_attention(tmp / "att.tsv", caches.graph, caches.layers[0].alpha)
    rows = (tmp / "att.tsv").read_text().splitlines()
    print(f"exported {len(rows)} attention rows (8 heads x {bundle.graph.num_edges} edges); first: {rows[0]!r}")
