import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sparse_gat import cli
from sparse_gat import data as D
from sparse_gat import model as M
from sparse_gat import tensor as T


@pytest.fixture
def planted_bundle(tmp_path):
    path = tmp_path / "planted.gatb"
    assert cli.main(["synth", "--generator", "planted-classes", "--nodes", "120", "--features", "8",
                     "--classes", "3", "--noise", "1.0", "--out", str(path)]) == 0
    return path


def write_config(tmp_path, **fields):
    cfg = {"preset": "cora-citeseer", "max_epochs": 12, "patience": 20, **fields}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestTrain:
    def test_same_seed_same_metrics(self, tmp_path, planted_bundle):
        cfg = write_config(tmp_path, dataset=planted_bundle.name)
        outs = []
        for name in ("a", "b"):
            assert cli.main(["train", "--config", str(cfg), "--runs", "1", "--seed", "7",
                             "--out", str(tmp_path / name)]) == 0
            outs.append((tmp_path / name / "metrics.json").read_bytes())
        assert outs[0] == outs[1]
        hist = [(tmp_path / n / "run_000" / "history.csv").read_text().splitlines() for n in "ab"]
        strip = lambda lines: [ln.rsplit(",", 1)[0] for ln in lines]  # noqa: E731
        assert strip(hist[0]) == strip(hist[1])
        assert json.loads(outs[0])["runs"] == 1

    def test_multiple_runs(self, tmp_path, planted_bundle):
        cfg = write_config(tmp_path, dataset=str(planted_bundle), runs=3)
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        rec = json.loads((tmp_path / "o" / "metrics.json").read_text())
        assert rec["metric"] == "accuracy" and rec["runs"] == 3 and len(rec["per_run"]) == 3
        assert rec["std"] == pytest.approx(float(np.std(rec["per_run"], ddof=1)))
        results = json.loads((tmp_path / "o" / "results.json").read_text())
        assert [r["seed"] for r in results["runs"]] == [0, 1, 2]
        for r in range(3):
            assert (tmp_path / "o" / f"run_{r:03d}" / "best.gatw").is_file()

    def test_saved_config_reproduces(self, tmp_path, planted_bundle):
        cfg = write_config(tmp_path, dataset=str(planted_bundle))
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        saved = tmp_path / "a" / "config.json"
        assert cli.main(["train", "--config", str(saved), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()

    def test_missing_dataset(self, tmp_path):
        cfg = write_config(tmp_path, dataset="nowhere.gatb")
        out = tmp_path / "never"
        assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 2
        assert not out.exists()

    def test_unknown_config_key(self, tmp_path, planted_bundle):
        cfg = write_config(tmp_path, dataset=str(planted_bundle), learning_rate=0.1)
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_inductive_config(self, tmp_path):
        paths = []
        for i, g in enumerate(D.multilabel_graphs(4, num_features=8, num_classes=5)):
            paths.append(tmp_path / f"g{i}.gatb")
            D.save_bundle(g, paths[-1])
        cfg = write_config(tmp_path, preset="ppi-64", train=[p.name for p in paths[:2]],
                           val=[paths[2].name], test=[paths[3].name], max_epochs=2)
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert json.loads((tmp_path / "o" / "metrics.json").read_text())["metric"] == "micro_f1"


class TestEval:
    def test_matches_training_report(self, tmp_path, planted_bundle, capsys):
        cfg = write_config(tmp_path, dataset=str(planted_bundle))
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        capsys.readouterr()
        ckpt = tmp_path / "o" / "run_000" / "best.gatw"
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--bundle", str(planted_bundle)]) == 0
        rec = json.loads(capsys.readouterr().out)
        trained = json.loads((tmp_path / "o" / "metrics.json").read_text())
        assert rec["mean"] == trained["per_run"][0]

    def test_corrupted_checkpoint(self, tmp_path, planted_bundle):
        ckpt = tmp_path / "bad.gatw"
        M.save_checkpoint(M.get_preset("cora-citeseer", 8, 3).build(T.make_rng(0)), ckpt)
        ckpt.write_bytes(ckpt.read_bytes()[:-5])
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--bundle", str(planted_bundle)]) == 2

    def test_incompatible_checkpoint(self, tmp_path, planted_bundle):
        ckpt = tmp_path / "wide.gatw"
        M.save_checkpoint(M.get_preset("cora-citeseer", 9, 3).build(T.make_rng(0)), ckpt)
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--bundle", str(planted_bundle)]) == 2

    def test_unseen_graphs(self, tmp_path, capsys):
        ckpt = tmp_path / "ml.gatw"
        M.save_checkpoint(M.get_preset("ppi-64", 8, 5).build(T.make_rng(0)), ckpt)
        paths = []
        for i, g in enumerate(D.multilabel_graphs(2, seed=11)):
            paths += ["--bundle", str(tmp_path / f"u{i}.gatb")]
            D.save_bundle(g, tmp_path / f"u{i}.gatb")
        assert cli.main(["eval", "--checkpoint", str(ckpt), *paths]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["metric"] == "micro_f1" and 0.0 <= rec["mean"] <= 1.0


class TestGradcheck:
    def test_default_passes(self, capsys):
        assert cli.main(["gradcheck"]) == 0
        assert json.loads(capsys.readouterr().out)["passed"]

    def test_tight_tolerance_fails(self):
        assert cli.main(["gradcheck", "--tol", "1e-9"]) == 1

    def test_constant_attention_zero_gradients(self):
        loss_fn, params, _ = cli.gradcheck_instance("const-cora-citeseer", l2_lambda=0.0)
        _, grads = loss_fn(params)
        att = [k for k in grads if k.endswith(("att_self", "att_neigh"))]
        assert att and all(not grads[k].any() for k in att)

    @pytest.mark.parametrize("preset", ["pubmed", "ppi-64", "mlp-baseline"])
    def test_other_presets(self, preset):
        assert cli.main(["gradcheck", "--preset", preset, "--max-coords", "30"]) == 0


class TestExportAttention:
    def test_rows_and_sums(self, tmp_path, planted_bundle):
        ckpt = tmp_path / "m.gatw"
        model = M.get_preset("cora-citeseer", 8, 3).build(T.make_rng(0))
        M.save_checkpoint(model, ckpt)
        out = tmp_path / "att.tsv"
        emb = tmp_path / "emb.tsv"
        assert cli.main(["export-attention", "--checkpoint", str(ckpt), "--bundle", str(planted_bundle),
                         "--out", str(out), "--embeddings", str(emb)]) == 0
        b = D.load_bundle(planted_bundle)
        rows = np.loadtxt(out)
        assert rows.shape[0] == 8 * b.graph.num_edges
        for head in range(8):
            sel = rows[rows[:, 2] == head]
            sums = np.bincount(sel[:, 0].astype(int), weights=sel[:, 3], minlength=b.num_nodes)
            np.testing.assert_allclose(sums, 1.0, atol=1e-5)
        assert np.loadtxt(emb).shape == (b.num_nodes, 64)

    def test_zero_attention_is_uniform(self, tmp_path, planted_bundle):
        model = M.get_preset("cora-citeseer", 8, 3).build(T.make_rng(0))
        for p in model.params:
            p["att_self"][:] = 0
            p["att_neigh"][:] = 0
        ckpt = tmp_path / "z.gatw"
        M.save_checkpoint(model, ckpt)
        out = tmp_path / "att.tsv"
        assert cli.main(["export-attention", "--checkpoint", str(ckpt), "--bundle", str(planted_bundle),
                         "--out", str(out), "--layer", "1"]) == 0
        rows = np.loadtxt(out)
        deg = D.load_bundle(planted_bundle).graph.degrees
        np.testing.assert_allclose(rows[:, 3], 1.0 / deg[rows[:, 0].astype(int)], atol=1e-6)


class TestImportText:
    def test_fixture(self, tmp_path, capsys):
        d = Path(__file__).parent / "fixtures" / "toy3"
        out = tmp_path / "toy.gatb"
        assert cli.main(["import-text", "--edges", str(d / "edges.txt"), "--features", str(d / "features.txt"),
                         "--labels", str(d / "labels.txt"), "--masks", str(d / "masks.txt"),
                         "--out", str(out)]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["raw_edges"] == 2 and rec["processed_edges"] == 7
        assert D.load_bundle(out).num_nodes == 3

    def test_missing_input(self, tmp_path):
        assert cli.main(["import-text", "--edges", "x", "--features", "y", "--labels", "z", "--masks", "w",
                         "--out", str(tmp_path / "o.gatb")]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sparse_gat.cli", "synth", "--nodes", "50",
                           "--out", str(tmp_path / "s.gatb")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert D.load_bundle(tmp_path / "s.gatb").num_nodes == 50


def test_bad_arguments_exit_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--runs", "many"])
    assert exc.value.code == 2
