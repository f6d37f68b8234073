from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_gat import data as D
from sparse_gat import graph as G
from sparse_gat.errors import ConfigError, FormatError, ValidationError

import datasets

FIXTURES = Path(__file__).parent / "fixtures"


def random_bundle(rng, n=17, f=5, c=3, multilabel=False, directed=False):
    edges = rng.integers(0, n, size=(3 * n, 2))
    g = G.from_edge_list(n, edges, symmetrize=not directed, add_self_loops=True)
    labels = rng.integers(0, 2, (n, c)).astype(np.uint8) if multilabel else rng.integers(0, c, n)
    split = rng.integers(0, 4, n)
    return G.GraphBundle(g, rng.standard_normal((n, f)).astype(np.float32), labels, c,
                         split == 0, split == 1, split == 2, multilabel=multilabel, directed=directed,
                         raw_edges=len(edges), name="r")


def assert_bundles_equal(a, b):
    assert a.graph == b.graph
    assert a.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)
    for m in ("train_mask", "val_mask", "test_mask"):
        np.testing.assert_array_equal(getattr(a, m), getattr(b, m))
    assert (a.num_classes, a.multilabel, a.directed, a.raw_edges) == \
        (b.num_classes, b.multilabel, b.directed, b.raw_edges)


class TestBundleFile:
    @pytest.mark.parametrize("multilabel", [False, True])
    @pytest.mark.parametrize("directed", [False, True])
    def test_round_trip(self, rng, tmp_path, multilabel, directed):
        b = random_bundle(rng, multilabel=multilabel, directed=directed)
        D.save_bundle(b, tmp_path / "b.gatb")
        back = D.load_bundle(tmp_path / "b.gatb")
        assert_bundles_equal(b, back)
        assert D.bundle_bytes(back) == (tmp_path / "b.gatb").read_bytes()

    def test_header_is_little_endian(self, rng):
        buf = D.bundle_bytes(random_bundle(rng, n=17))
        assert buf[:4] == b"GATB"
        assert buf[12:16] == (17).to_bytes(4, "little")

    def test_every_truncation_is_a_format_error(self, rng):
        buf = D.bundle_bytes(random_bundle(rng, n=9))
        for cut in range(len(buf)):
            with pytest.raises(FormatError):
                D.bundle_from_bytes(buf[:cut])

    def test_bad_version_offset(self, rng):
        buf = bytearray(D.bundle_bytes(random_bundle(rng)))
        buf[4] = 9
        with pytest.raises(FormatError) as exc:
            D.bundle_from_bytes(bytes(buf))
        assert exc.value.offset == 4

    @given(st.binary(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_garbage_never_crashes(self, blob):
        with pytest.raises(FormatError):
            D.bundle_from_bytes(b"GATB" + blob)

    @given(st.integers(0, 10_000), st.integers(0, 255))
    @settings(max_examples=200, deadline=None)
    def test_byte_flips_are_clean(self, pos, value):
        buf = bytearray(D.bundle_bytes(random_bundle(np.random.default_rng(0), n=11)))
        buf[pos % len(buf)] = value
        try:
            D.bundle_from_bytes(bytes(buf))
        except FormatError:
            pass


class TestTextImport:
    def test_toy_fixture(self):
        d = FIXTURES / "toy3"
        b = D.import_text(d / "edges.txt", d / "features.txt", d / "labels.txt", d / "masks.txt")
        assert (b.num_nodes, b.num_features, b.num_classes, b.raw_edges) == (3, 2, 2, 2)
        assert b.graph.num_edges == 7
        assert b.train_mask.tolist() == [True, False, False]
        b.graph.validate()

    def test_overlapping_masks(self, tmp_path):
        d = FIXTURES / "toy3"
        (tmp_path / "masks.txt").write_text("train 0 1\nval 1\ntest 2\n")
        with pytest.raises(ValidationError, match="overlap"):
            D.import_text(d / "edges.txt", d / "features.txt", d / "labels.txt", tmp_path / "masks.txt")

    def test_malformed_line_number(self, tmp_path):
        d = FIXTURES / "toy3"
        (tmp_path / "features.txt").write_text("1 0\n0.5 x\n-1 2\n")
        with pytest.raises(FormatError) as exc:
            D.import_text(d / "edges.txt", tmp_path / "features.txt", d / "labels.txt", d / "masks.txt")
        assert exc.value.offset == "line 2"

    def test_count_mismatch(self, tmp_path):
        d = FIXTURES / "toy3"
        (tmp_path / "labels.txt").write_text("0\n1\n")
        with pytest.raises(ValidationError):
            D.import_text(d / "edges.txt", d / "features.txt", tmp_path / "labels.txt", d / "masks.txt")

    @pytest.mark.parametrize("multilabel", [False, True])
    def test_export_import(self, rng, tmp_path, multilabel):
        b = random_bundle(rng, multilabel=multilabel)
        paths = D.export_text(b, tmp_path)
        back = D.import_text(paths["edges"], paths["features"], paths["labels"], paths["masks"],
                             multilabel=multilabel, num_classes=b.num_classes)
        assert back.graph == b.graph
        np.testing.assert_array_equal(back.features, b.features)
        np.testing.assert_array_equal(back.labels, b.labels)


class TestSynthetic:
    @pytest.mark.parametrize("generator", sorted(D.GENERATORS))
    def test_seed_determinism(self, generator):
        spec = D.SyntheticSpec(generator, num_nodes=300, seed=4)
        assert D.bundle_bytes(D.generate_synthetic(spec)) == D.bundle_bytes(D.generate_synthetic(spec))

    @pytest.mark.parametrize("generator", sorted(D.GENERATORS))
    def test_balanced_within_ten_percent(self, generator):
        b = D.generate_synthetic(D.SyntheticSpec(generator, num_nodes=2000, num_classes=4))
        counts = np.bincount(b.labels, minlength=4)
        assert np.all(np.abs(counts - 500) <= 50)

    def test_neighbor_vote_bayes_rule_is_perfect(self):
        b = D.generate_synthetic(D.SyntheticSpec(num_nodes=1000, noise=0.0))
        c = b.num_classes
        x = b.features
        pred = np.full(b.num_nodes, -1)
        for i in np.flatnonzero(b.train_mask | b.val_mask | b.test_mask):
            informants = [j for j in b.graph.neighbors(i) if x[j, 0] == 1.0]
            assert len(informants) == 1
            pred[i] = int(np.argmax(x[informants[0], 1:c + 1]))
        sel = b.test_mask
        assert np.mean(pred[sel] == b.labels[sel]) == 1.0

    def test_neighbor_vote_masks_skip_informants(self):
        b = D.generate_synthetic(D.SyntheticSpec(num_nodes=400))
        inf = b.extra["informants"]
        assert not (b.train_mask | b.val_mask | b.test_mask)[inf].any()

    @pytest.mark.parametrize("kwargs", [dict(num_nodes=2, num_classes=3), dict(generator="nope"),
                                        dict(num_features=3, num_classes=4), dict(train_frac=0.9, val_frac=0.2)])
    def test_degenerate_specs(self, kwargs):
        with pytest.raises(ConfigError):
            D.generate_synthetic(D.SyntheticSpec(**kwargs))

    def test_multilabel_graphs(self):
        gs = D.multilabel_graphs(3, num_classes=5)
        assert len(gs) == 3
        assert all(g.multilabel and g.labels.shape == (60, 5) for g in gs)
        assert 0.2 < np.mean(np.concatenate([g.labels for g in gs])) < 0.8


@pytest.mark.dataset
class TestConvertedBenchmarks:
    def test_cora_shape(self):
        if not datasets.have("cora"):
            pytest.skip(f"no converted Cora bundle under {datasets.DATA_DIR}")
        b = D.load_bundle(datasets.bundle_path("cora"))
        assert (b.num_nodes, b.num_features, b.num_classes) == (2708, 1433, 7)
        assert (b.train_mask.sum(), b.val_mask.sum(), b.test_mask.sum()) == (140, 500, 1000)

    def test_citeseer_shape(self):
        if not datasets.have("citeseer"):
            pytest.skip(f"no converted Citeseer bundle under {datasets.DATA_DIR}")
        b = D.load_bundle(datasets.bundle_path("citeseer"))
        assert (b.num_nodes, b.num_features, b.num_classes) == (3327, 3703, 6)

    def test_ppi_corpus(self):
        if not datasets.have("ppi"):
            pytest.skip(f"no converted PPI corpus under {datasets.DATA_DIR}")
        counts = [len(datasets.ppi_paths(s)) for s in ("train", "val", "test")]
        assert counts == [20, 2, 2]
        b = D.load_bundle(datasets.ppi_paths("train")[0])
        assert b.multilabel and (b.num_features, b.num_classes) == (50, 121)
