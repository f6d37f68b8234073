import numpy as np
import pytest

from sparse_gat import layer as L
from sparse_gat import model as M
from sparse_gat import numcheck
from sparse_gat.errors import ContractError

from conftest import random_graph, random_params


def quadratic(params):
    t = params["t"]
    return float(np.sum(t ** 2)), {"t": 2 * t}


class TestGradcheck:
    def test_quadratic(self):
        p = {"t": np.array([3.0])}
        rep = numcheck.gradcheck(quadratic, p)
        assert rep.tensors["t"].numeric == pytest.approx(6.0, abs=1e-9)
        assert rep.passed
        assert p["t"][0] == 3.0

    def test_constant(self):
        rep = numcheck.gradcheck(lambda p: (4.0, {"t": np.zeros(3)}), {"t": np.ones(3)})
        t = rep.tensors["t"]
        assert abs(t.analytic) < 1e-9 and abs(t.numeric) < 1e-9
        assert rep.passed

    def test_wrong_gradient_fails(self):
        rep = numcheck.gradcheck(lambda p: (float(np.sum(p["t"] ** 2)), {"t": 3 * p["t"]}),
                                 {"t": np.array([1.0, -2.0])})
        assert not rep.passed
        assert "FAIL" in rep.summary()

    def test_nondeterministic_loss(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ContractError):
            numcheck.gradcheck(lambda p: (float(rng.random()), {"t": np.zeros(1)}), {"t": np.zeros(1)})

    def test_subsampling(self):
        p = {"t": np.linspace(-1, 1, 5000)}
        rep = numcheck.gradcheck(quadratic, p, max_coords=50)
        assert rep.tensors["t"].checked == 50

    def test_relative_error_floor(self):
        assert numcheck.relative_error(np.array([0.0]), np.array([1e-12]))[0] == pytest.approx(1e-4)

    def test_report_dict(self):
        d = numcheck.gradcheck(quadratic, {"t": np.array([1.0, 2.0])}).to_dict()
        assert d["passed"] and set(d["tensors"]["t"]) >= {"max_rel_error", "argmax", "checked"}


def gat_ce_loss(rng):
    g = random_graph(rng, 12)
    cfg = L.GatLayerConfig(5, 3, num_heads=2, merge="average", activation="none", output_layer=True)
    p = random_params(cfg, rng)
    h = rng.standard_normal((12, 5))
    y = rng.integers(0, 3, 12)
    mask = np.ones(12, bool)

    def loss_fn(params):
        out, cache = L.forward(h, params, cfg, g)
        loss, gz = M.softmax_cross_entropy(out, y, mask)
        _, grads = L.backward(gz, cache, params, cfg, g)
        return loss, grads

    return loss_fn, p


class TestOnGatLayer:
    def test_layer_with_cross_entropy(self, rng):
        loss_fn, p = gat_ce_loss(rng)
        assert numcheck.gradcheck(loss_fn, p).max_rel_error < 1e-5

    def test_halving_step_stays_in_truncation_regime(self, rng):
        loss_fn, p = gat_ce_loss(rng)
        coarse = numcheck.gradcheck(loss_fn, p, step=1e-4).max_rel_error
        fine = numcheck.gradcheck(loss_fn, p, step=1e-5).max_rel_error
        assert fine <= 10 * coarse

    def test_gradcheck_is_deterministic(self, rng):
        loss_fn, p = gat_ce_loss(rng)
        a = numcheck.gradcheck(loss_fn, p).to_dict()
        b = numcheck.gradcheck(loss_fn, p).to_dict()
        assert a == b
