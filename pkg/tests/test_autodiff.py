import math

import numpy as np
import pytest

from fewdeid import autodiff as ad
from fewdeid.autodiff import Tensor, backward, grad_check, no_grad
from fewdeid.seeding import rng_from


def t64(data, requires_grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class TestForwardOps:
    def test_softmax_symmetry(self):
        out = ad.softmax(t64([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_softmax_rows_sum_to_one(self):
        rng = rng_from(0, "sm")
        x = t64(rng.normal(size=(5, 7)) * 5)
        out = ad.softmax(x)
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(5), atol=1e-6)
        assert (out.data > 0).all() and (out.data < 1).all()

    def test_softmax_stable_on_large_logits(self):
        out = ad.softmax(t64([[1e4, 0.0]]))
        assert np.isfinite(out.data).all()

    def test_cross_entropy_uniform_15(self):
        logits = t64(np.zeros((4, 15)), requires_grad=True)
        loss = ad.cross_entropy_with_ignore(logits, np.zeros(4, dtype=int), ignore_id=-100)
        assert abs(loss.item() - math.log(15)) < 1e-9

    def test_cross_entropy_nonnegative_and_zero_iff_certain(self):
        logits = t64([[100.0, 0.0, 0.0]])
        loss = ad.cross_entropy_with_ignore(logits, np.array([0]), -100)
        assert 0 <= loss.item() < 1e-7

    def test_cross_entropy_all_ignored(self):
        logits = t64(np.ones((3, 5)), requires_grad=True)
        loss = ad.cross_entropy_with_ignore(logits, np.full(3, -100), -100)
        assert loss.item() == 0.0
        backward(loss)
        np.testing.assert_array_equal(logits.grad, np.zeros((3, 5)))

    def test_layer_norm_moments(self):
        rng = rng_from(1, "ln")
        x = t64(rng.normal(2.0, 3.0, size=(6, 32)))
        gamma, beta = t64(np.ones(32)), t64(np.zeros(32))
        out = ad.layer_norm(x, gamma, beta).data
        np.testing.assert_allclose(out.mean(axis=-1), np.zeros(6), atol=1e-6)
        np.testing.assert_allclose(out.var(axis=-1), np.ones(6), atol=1e-4)

    def test_shape_errors_name_shapes(self):
        with pytest.raises(ad.ShapeError, match="3"):
            ad.matmul(t64(np.ones((2, 3))), t64(np.ones((4, 2))))
        with pytest.raises(ad.ShapeError):
            ad.add(t64(np.ones((2, 3))), t64(np.ones((4,))))

    def test_embedding_out_of_range(self):
        table = t64(np.ones((5, 2)))
        with pytest.raises(ad.ShapeError, match="range"):
            ad.embedding_lookup(table, np.array([7]))

    def test_dropout_inverted_scaling(self):
        rng = rng_from(2, "drop")
        x = t64(np.ones((1000,)))
        out = ad.dropout(x, 0.25, rng)
        kept = out.data[out.data != 0]
        np.testing.assert_allclose(kept, 4.0 / 3.0)
        assert abs(out.data.mean() - 1.0) < 0.1

    def test_dropout_seeded_determinism(self):
        x = t64(np.ones((50,)))
        a = ad.dropout(x, 0.5, rng_from(9, "d")).data
        b = ad.dropout(x, 0.5, rng_from(9, "d")).data
        np.testing.assert_array_equal(a, b)

    def test_debug_checks_catch_nonfinite(self):
        ad.set_debug_checks(True)
        try:
            with pytest.raises(FloatingPointError):
                ad.scale(t64([1.0]), float("inf"))
        finally:
            ad.set_debug_checks(False)


class TestBackward:
    def test_quadratic_grad_is_identity(self):
        w = t64([[1.0, -2.0], [3.0, 0.5]], requires_grad=True)
        loss = ad.scale(ad.sum_(ad.mul(w, w)), 0.5)
        backward(loss)
        np.testing.assert_allclose(w.grad, w.data)

    def test_shared_input_accumulates(self):
        x = t64([2.0], requires_grad=True)
        loss = ad.sum_(ad.add(ad.mul(x, x), ad.scale(x, 3.0)))  # x^2 + 3x
        backward(loss)
        np.testing.assert_allclose(x.grad, [2 * 2.0 + 3.0])

    def test_backward_linearity(self):
        rng = rng_from(3, "lin")
        make = lambda: t64(rng.normal(size=(4, 4)), requires_grad=True)
        w = make()

        def f(t):
            return ad.sum_(ad.mul(t, t))

        def g(t):
            return ad.sum_(ad.gelu(t))

        loss = ad.add(f(w), g(w))
        backward(loss)
        combined = w.grad.copy()

        w.grad = None
        backward(f(w))
        backward(g(w))  # accumulates
        np.testing.assert_allclose(w.grad, combined, rtol=1e-12)

    def test_non_scalar_loss_rejected(self):
        w = t64(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(ad.mul(w, w))

    def test_graph_cleared_after_backward(self):
        w = t64(np.ones(3), requires_grad=True)
        y = ad.mul(w, w)
        loss = ad.sum_(y)
        backward(loss)
        assert y._vjp is None and y._parents == ()
        assert y.grad is None  # interior grads dropped
        assert w.grad is not None

    def test_no_grad_skips_recording(self):
        w = t64(np.ones(3), requires_grad=True)
        with no_grad():
            y = ad.mul(w, w)
        assert y._vjp is None

    def test_matmul_broadcast_batched(self):
        rng = rng_from(5, "mm")
        a = t64(rng.normal(size=(2, 3, 4, 5)), requires_grad=True)
        b = t64(rng.normal(size=(5, 6)), requires_grad=True)
        out = ad.matmul(a, b)
        assert out.shape == (2, 3, 4, 6)
        backward(ad.sum_(out))
        assert a.grad.shape == a.shape and b.grad.shape == b.shape
        # numeric check on one coordinate of the broadcast operand
        eps = 1e-6
        i = (0, 0)
        orig = b.data[i]
        b.data[i] = orig + eps
        f_plus = float((a.data @ b.data).sum())
        b.data[i] = orig - eps
        f_minus = float((a.data @ b.data).sum())
        b.data[i] = orig
        fd = (f_plus - f_minus) / (2 * eps)
        assert abs(fd - b.grad[i]) < 1e-5


class TestGradCheckSmallOps:
    def params(self, shapes, seed=0):
        rng = rng_from(seed, "gc")
        return {
            name: t64(rng.normal(size=shape) * 0.5, requires_grad=True)
            for name, shape in shapes.items()
        }

    def check(self, f, params, tol=2e-7):
        err = grad_check(f, params, eps=1e-5)
        assert err <= tol, f"max relative error {err}"

    def test_quadratic_exact(self):
        params = self.params({"w": (3, 3)})
        f = lambda: ad.scale(ad.sum_(ad.mul(params["w"], params["w"])), 0.5)
        err = grad_check(f, params, eps=1e-5)
        assert err <= 1e-9

    def test_softmax_ce_chain(self):
        params = self.params({"w": (4, 6)})
        targets = np.array([0, 2, 5, -100])

        def f():
            return ad.cross_entropy_with_ignore(params["w"], targets, -100)

        self.check(f, params)

    def test_layer_norm_gelu_chain(self):
        params = self.params({"x": (3, 8), "g": (8,), "b": (8,)})

        def f():
            return ad.sum_(ad.gelu(ad.layer_norm(params["x"], params["g"], params["b"])))

        self.check(f, params, tol=1e-6)

    def test_softmax_op(self):
        params = self.params({"x": (3, 5)})
        probe = t64(rng_from(8, "probe").normal(size=(3, 5)))

        def f():
            return ad.sum_(ad.mul(ad.softmax(params["x"]), probe))

        self.check(f, params, tol=1e-6)

    def test_embedding_scatter(self):
        params = self.params({"table": (6, 4)})
        ids = np.array([[0, 2, 2], [5, 0, 1]])
        probe = t64(rng_from(11, "probe2").normal(size=(2, 3, 4)))

        def f():
            return ad.sum_(ad.mul(ad.embedding_lookup(params["table"], ids), probe))

        self.check(f, params)

    def test_dropout_nondeterminism_detected(self):
        """grad_check's contract requires a deterministic f; a dropout layer
        drawing fresh noise per call must blow the error up."""
        params = self.params({"x": (8, 8)})
        state = {"n": 0}

        def f():
            state["n"] += 1
            return ad.sum_(ad.dropout(params["x"], 0.5, rng_from(state["n"], "noise")))

        err = grad_check(f, params, eps=1e-5, samples_per_tensor=8)
        assert err > 1e-2
