"""Command-line entry point ``gat``.

Subcommands: ``train``, ``eval``, ``gradcheck``, ``export-attention``,
``synth`` and ``import-text``. Exit codes: 0 success, 1 internal error,
2 usage or validation error. Progress goes to stderr; machine-readable
results go to files or stdout.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import data, layer, metrics, model, numcheck, tensor, train
from .errors import GatError, ShapeError
from .graph import from_edge_list

log = logging.getLogger("sparse_gat")


class UsageError(Exception):
    """Bad arguments or inputs; reported with exit code 2."""


@dataclass
class RunConfig:
    """Everything needed to reproduce a training invocation.

    Either ``dataset`` (one transductive bundle) or ``train``/``val``/``test``
    (lists of inductive bundles) must be given. Relative paths resolve against
    the config file's directory. Unset training fields fall back to the preset.
    """

    preset: str = "cora-citeseer"
    dataset: str = None
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    lr: float = None
    l2_lambda: float = None
    max_epochs: int = 100_000
    patience: int = None
    seed: int = 0
    batch_graphs: int = None
    runs: int = 1
    out: str = "runs"
    threads: int = 1

    @classmethod
    def from_dict(cls, raw, base=Path(".")):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        resolve = lambda p: str((base / p).resolve()) if p is not None else None  # noqa: E731
        cfg.dataset = resolve(cfg.dataset)
        cfg.train = [resolve(p) for p in cfg.train]
        cfg.val = [resolve(p) for p in cfg.val]
        cfg.test = [resolve(p) for p in cfg.test]
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        return cls.from_dict(raw, path.parent)

    @property
    def inductive(self):
        return bool(self.train)

    def dataset_paths(self):
        return [self.dataset] if self.dataset else self.train + self.val + self.test

    def validate(self):
        if self.dataset and self.train:
            raise UsageError("give either 'dataset' or 'train'/'val'/'test', not both")
        if not self.dataset and not (self.train and self.val):
            raise UsageError("config needs 'dataset' or both 'train' and 'val'")
        if self.runs < 1:
            raise UsageError("runs must be at least 1")
        missing = [p for p in self.dataset_paths() if not Path(p).is_file()]
        if missing:
            raise UsageError(f"dataset not found: {', '.join(missing)}")

    def train_config(self, seed):
        return train.TrainConfig(
            preset=self.preset, lr=self.lr, l2_lambda=self.l2_lambda, max_epochs=self.max_epochs,
            patience=self.patience, seed=seed, batch_graphs=self.batch_graphs,
        )


def _load(path):
    try:
        return data.load_bundle(path)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {path}") from None
    except GatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _metric_name(task):
    return "accuracy" if task == "single-label" else "micro_f1"


def cmd_train(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for key in ("runs", "seed", "threads", "out", "preset"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    model.get_preset(cfg.preset, 1, 2)  # fail early on an unknown preset
    if cfg.inductive:
        splits = {k: [_load(p) for p in getattr(cfg, k)] for k in ("train", "val", "test")}
        splits["test"] = splits["test"] or splits["val"]
    else:
        bundle = _load(cfg.dataset)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    per_run, runs = [], []
    for run in range(cfg.runs):
        seed = cfg.seed + run
        t0 = time.perf_counter()
        tc = cfg.train_config(seed)
        with threadpool_limits(limits=cfg.threads):
            if cfg.inductive:
                res = train.train_inductive(splits["train"], splits["val"], tc)
                _, test_metric = train.evaluate_graphs(res.model, splits["test"])
            else:
                res = train.train_transductive(bundle, tc)
                _, test_metric = train.evaluate(res.model, bundle, bundle.test_mask)
        run_dir = out / f"run_{run:03d}"
        run_dir.mkdir(exist_ok=True)
        train.write_history(run_dir / "history.csv", res.history)
        model.save_checkpoint(res.model, run_dir / "best.gatw")
        per_run.append(test_metric)
        best = res.history[res.best_epoch - 1]
        runs.append({
            "run": run, "seed": seed, "epochs": res.epochs_run, "best_epoch": res.best_epoch,
            "val_loss": best.val_loss, "val_metric": best.val_metric, "test_metric": test_metric,
            "seconds": time.perf_counter() - t0,
        })
        log.info("run %d seed %d: %d epochs, best %d, test %.4f", run, seed, res.epochs_run, res.best_epoch, test_metric)
    report = metrics.aggregate(_metric_name(res.model.task), per_run)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "results.json").write_text(json.dumps(
        {"config": asdict(cfg), "metrics": report.to_dict(), "runs": runs}, indent=2) + "\n")
    print(report.to_json())
    return 0


def _load_checkpoint(path):
    try:
        return model.load_checkpoint(path)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {path}") from None
    except GatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _check_compatible(mdl, bundle):
    if bundle.num_features != mdl.in_features:
        raise UsageError(f"checkpoint expects {mdl.in_features} features, bundle has {bundle.num_features}")
    if bundle.num_classes != mdl.num_outputs:
        raise UsageError(f"checkpoint predicts {mdl.num_outputs} outputs, bundle has {bundle.num_classes} classes")
    if bundle.multilabel != (mdl.task == "multi-label"):
        raise UsageError("checkpoint task does not match bundle labels")


def cmd_eval(args):
    mdl = _load_checkpoint(args.checkpoint)
    bundles = [_load(p) for p in args.bundle]
    for b in bundles:
        _check_compatible(mdl, b)
    if len(bundles) == 1 and bundles[0].test_mask.any() and not args.whole_graphs:
        b = bundles[0]
        _, value = train.evaluate(mdl, b, b.test_mask)
        report = metrics.MetricReport(_metric_name(mdl.task), value, int(b.test_mask.sum()))
    else:
        _, value = train.evaluate_graphs(mdl, bundles)
        report = metrics.MetricReport(_metric_name(mdl.task), value, sum(b.num_nodes for b in bundles))
    print(report.to_json())
    return 0


# widest float type available; on x86-64 Linux this is the 80-bit extended format
EXTENDED = np.longdouble


def gradcheck_instance(preset, seed=0, num_nodes=12, num_features=6, num_classes=3, l2_lambda=None):
    """A float64 loss closure over a random small graph for the given preset.

    Dropout masks are drawn once and frozen so the loss is deterministic.
    Returns ``(loss_fn, params_by_name, value_fn)``. ``loss_fn`` gives the
    float64 loss and analytic gradients; ``value_fn`` re-evaluates the same
    loss in extended precision from the current float64 parameters, for use
    as the finite-difference side of the check.
    """
    p = model.get_preset(preset, num_features, num_classes)
    lam = p.l2_lambda if l2_lambda is None else l2_lambda
    rng = tensor.make_rng(seed, tensor.STREAM_DATA)
    edges = rng.integers(0, num_nodes, size=(2 * num_nodes, 2))
    graph = from_edge_list(num_nodes, edges, symmetrize=True, add_self_loops=True)
    feats = rng.standard_normal((num_nodes, num_features))
    mask = np.ones(num_nodes, dtype=bool)
    if p.task == "single-label":
        labels = rng.integers(0, num_classes, size=num_nodes)
    else:
        labels = (rng.random((num_nodes, num_classes)) < 0.5).astype(np.uint8)
    mdl = p.build(tensor.make_rng(seed, tensor.STREAM_INIT), dtype=np.float64)
    # shift off zero biases so bias gradients are exercised away from symmetric points
    for prm in mdl.params:
        if "bias" in prm:
            prm["bias"] += 0.1 * rng.standard_normal(prm["bias"].shape)
    _, caches = model.forward_arrays(mdl, feats, graph, tensor.make_rng(seed, tensor.STREAM_DROPOUT), training=True)
    frozen = caches.masks
    frozen_ext = [{k: m.astype(EXTENDED) for k, m in masks.items()} for masks in frozen]
    feats_ext = feats.astype(EXTENDED)

    def loss_fn(_params):
        logits, c = model.forward_arrays(mdl, feats, graph, training=True, masks=frozen)
        loss, g = model.task_loss(mdl, logits, labels, mask)
        grads, _ = model.model_backward(mdl, c, g)
        grads = train.apply_l2(grads, mdl.params, lam)
        flat = {f"layer{i}.{k}": v for i, gr in enumerate(grads) for k, v in gr.items()}
        return loss + train.l2_penalty(mdl.params, lam), flat

    def value_fn(_params):
        wide = mdl.astype(EXTENDED)
        logits, _ = model.forward_arrays(wide, feats_ext, graph, training=True, masks=frozen_ext)
        loss, _ = model.task_loss(wide, logits, labels, mask)
        return loss + train.l2_penalty(wide.params, lam)

    return loss_fn, dict(mdl.named_params()), value_fn


def cmd_gradcheck(args):
    loss_fn, params, value_fn = gradcheck_instance(args.preset, args.seed)
    report = numcheck.gradcheck(loss_fn, params, step=args.step, tol=args.tol, max_coords=args.max_coords,
                                seed=args.seed, value_fn=value_fn)
    print(json.dumps(report.to_dict(), indent=2))
    print(report.summary(), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_export_attention(args):
    mdl = _load_checkpoint(args.checkpoint)
    b = _load(args.bundle)
    _check_compatible(mdl, b)
    if not 0 <= args.layer < len(mdl.configs):
        raise UsageError(f"layer index must lie in [0, {len(mdl.configs)})")
    feats = np.asarray(b.features, dtype=mdl.dtype)
    _, caches = model.forward_arrays(mdl, feats, b.graph)
    cache = caches.layers[args.layer]
    layer.export_attention(args.out, caches.graph, cache.alpha)
    if args.embeddings:
        h = tensor.elu(cache.z) if cache.config.activation == "elu" else cache.z
        np.savetxt(args.embeddings, h, fmt="%.7g", delimiter="\t")
    log.info("wrote %d attention rows to %s", cache.alpha.size, args.out)
    return 0


def cmd_synth(args):
    spec = data.SyntheticSpec(
        generator=args.generator, num_nodes=args.nodes, num_features=args.features,
        num_classes=args.classes, edge_density=args.density, noise=args.noise, seed=args.seed,
    )
    try:
        bundle = data.generate_synthetic(spec)
    except GatError as exc:
        raise UsageError(str(exc)) from None
    data.save_bundle(bundle, args.out)
    log.info("wrote %s: N=%d E=%d", args.out, bundle.num_nodes, bundle.graph.num_edges)
    return 0


def cmd_import_text(args):
    try:
        bundle = data.import_text(args.edges, args.features, args.labels, args.masks,
                                  directed=args.directed, multilabel=args.multilabel,
                                  num_classes=args.classes, name=Path(args.out).stem)
    except FileNotFoundError as exc:
        raise UsageError(f"input not found: {exc.filename}") from None
    except GatError as exc:
        raise UsageError(str(exc)) from None
    data.save_bundle(bundle, args.out)
    print(json.dumps({
        "nodes": bundle.num_nodes, "raw_edges": bundle.raw_edges, "processed_edges": bundle.graph.num_edges,
        "features": bundle.num_features, "classes": bundle.num_classes,
        "train": int(bundle.train_mask.sum()), "val": int(bundle.val_mask.sum()), "test": int(bundle.test_mask.sum()),
    }))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="gat", description="Sparse graph attention networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one or more runs from a JSON config")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="BLAS threads; >1 may break bitwise reproducibility")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=model.PRESET_NAMES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on bundles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True, action="append", help="repeat for several graphs")
    p.add_argument("--whole-graphs", action="store_true", help="score every node instead of the test mask")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of a preset on a random graph")
    p.add_argument("--preset", default="cora-citeseer", choices=model.PRESET_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--max-coords", type=int, default=100)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-attention", help="dump per-edge attention coefficients")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--embeddings", help="also write that layer's node outputs as TSV")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("synth", help="generate a synthetic bundle")
    p.add_argument("--generator", default="neighbor-vote", choices=sorted(data.GENERATORS))
    p.add_argument("--nodes", type=int, default=2000)
    p.add_argument("--features", type=int, default=40)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--density", type=float, default=6.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import-text", help="convert text dumps into a bundle file")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--multilabel", action="store_true")
    p.add_argument("--classes", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_text)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    threads = getattr(args, "threads", None) or 1
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except UsageError as exc:
        print(f"gat: error: {exc}", file=sys.stderr)
        return 2
    except (GatError, ShapeError) as exc:
        print(f"gat: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"gat: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
