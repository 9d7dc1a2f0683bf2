from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laborcast import tensor_core as tc
from laborcast.errors import ContractError, DimensionError, WindowError


def numeric_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


class TestTensor:
    def test_shape_matches_values(self):
        t = tc.tensor(np.arange(6.0).reshape(2, 3))
        assert t.shape == (2, 3) and t.size == 6
        assert t.data.dtype == np.float64

    def test_grad_same_shape_after_backward(self):
        w = tc.tensor(np.ones((2, 3)), requires_grad=True)
        tc.backward(tc.sum(w))
        assert w.grad.shape == w.shape


class TestMatmul:
    def test_identity(self, rng):
        a = rng.standard_normal((2, 2))
        out = tc.matmul(tc.tensor(np.eye(2)), tc.tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_example(self):
        out = tc.matmul(tc.tensor([[1.0, 2.0], [3.0, 4.0]]), tc.tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_zero_annihilates(self, rng):
        out = tc.matmul(tc.zeros((2, 3)), tc.tensor(rng.standard_normal((3, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            tc.matmul(tc.zeros((2, 3)), tc.zeros((4, 2)))

    def test_gradients(self, rng):
        a = tc.tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = tc.tensor(rng.standard_normal((4, 2)), requires_grad=True)
        tc.backward(tc.sum(tc.matmul(a, b)))
        np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))


class TestConv2d:
    def test_constant_ones(self):
        out = tc.conv2d(tc.ones((1, 5, 1)), tc.ones((1, 2, 1)), tc.zeros((1,)))
        assert out.shape == (1, 4, 1)
        np.testing.assert_array_equal(out.data, np.full((1, 4, 1), 2.0))

    def test_zero_kernels_give_bias(self, rng):
        bias = np.array([0.5, -1.5, 2.0])
        out = tc.conv2d(tc.tensor(rng.standard_normal((1, 9, 4))), tc.zeros((3, 4, 4)), tc.tensor(bias))
        np.testing.assert_array_equal(out.data[:, :, 0], np.repeat(bias[:, None], 6, axis=1))

    def test_prose_shape(self, rng):
        out = tc.conv2d(tc.tensor(rng.standard_normal((1, 30, 7))),
                        tc.tensor(rng.standard_normal((32, 7, 7))), tc.zeros((32,)))
        assert out.shape == (32, 24, 1)

    def test_batched_matches_single(self, rng):
        x = rng.standard_normal((3, 1, 8, 2))
        k, b = tc.tensor(rng.standard_normal((4, 3, 2))), tc.tensor(rng.standard_normal(4))
        batched = tc.conv2d(tc.tensor(x), k, b).data
        for n in range(3):
            np.testing.assert_allclose(batched[n], tc.conv2d(tc.tensor(x[n]), k, b).data, atol=1e-14)

    def test_kernel_longer_than_window(self):
        with pytest.raises(WindowError):
            tc.conv2d(tc.zeros((1, 3, 2)), tc.zeros((1, 4, 2)), tc.zeros((1,)))

    def test_feature_width_mismatch(self):
        with pytest.raises(DimensionError):
            tc.conv2d(tc.zeros((1, 6, 2)), tc.zeros((1, 3, 3)), tc.zeros((1,)))

    def test_direct_summation_oracle(self, rng):
        x = rng.standard_normal((1, 7, 3))
        k = rng.standard_normal((2, 3, 3))
        b = rng.standard_normal(2)
        out = tc.conv2d(tc.tensor(x), tc.tensor(k), tc.tensor(b)).data
        for c in range(2):
            for t in range(5):
                expect = b[c] + sum(x[0, t + i, f] * k[c, i, f] for i in range(3) for f in range(3))
                assert out[c, t, 0] == pytest.approx(expect, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
    def test_linearity(self, a, b, seed):
        r = np.random.default_rng(seed)
        x, y = r.standard_normal((1, 8, 3)), r.standard_normal((1, 8, 3))
        k, zero = tc.tensor(r.standard_normal((2, 3, 3))), tc.zeros((2,))
        lhs = tc.conv2d(tc.tensor(a * x + b * y), k, zero).data
        rhs = a * tc.conv2d(tc.tensor(x), k, zero).data + b * tc.conv2d(tc.tensor(y), k, zero).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-12, rtol=0)

    def test_gradient(self, rng):
        x = rng.standard_normal((1, 6, 2))
        k = rng.standard_normal((3, 3, 2))
        b = rng.standard_normal(3)
        w = rng.standard_normal((3, 4, 1))
        tk, tb = tc.tensor(k, requires_grad=True), tc.tensor(b, requires_grad=True)
        tc.backward(tc.sum(tc.conv2d(tc.tensor(x), tk, tb) * tc.tensor(w)))

        def f():
            return float(np.sum(tc.conv2d(tc.tensor(x), tc.tensor(k), tc.tensor(b)).data * w))

        np.testing.assert_allclose(tk.grad, numeric_grad(f, k), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(tb.grad, numeric_grad(f, b), rtol=1e-6, atol=1e-8)


class TestElementwise:
    def test_relu(self):
        np.testing.assert_array_equal(tc.elementwise("relu", tc.tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])

    def test_sigmoid_zero(self):
        assert tc.elementwise("sigmoid", tc.tensor([0.0])).data[0] == 0.5

    def test_tanh_zero(self):
        assert tc.elementwise("tanh", tc.tensor([0.0])).data[0] == 0.0

    def test_sigmoid_saturates_finite(self):
        out = tc.sigmoid(tc.tensor([-1000.0, 1000.0])).data
        assert np.all(np.isfinite(out)) and out[0] == 0.0 and out[1] == 1.0

    def test_scalar_broadcast(self):
        out = tc.elementwise("mul", tc.tensor([1.0, 2.0]), 3.0)
        np.testing.assert_array_equal(out.data, [3.0, 6.0])

    def test_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            tc.elementwise("add", tc.zeros((2, 3)), tc.zeros((3,)))

    def test_unknown_name(self):
        with pytest.raises(ContractError):
            tc.elementwise("softmax", tc.zeros((2,)))

    @pytest.mark.parametrize("name", ["relu", "sigmoid", "tanh"])
    def test_unary_gradients(self, name, rng):
        x = rng.standard_normal(6) + 0.1
        t = tc.tensor(x, requires_grad=True)
        tc.backward(tc.sum(tc.elementwise(name, t)))
        f = lambda: float(np.sum(tc.elementwise(name, tc.tensor(x)).data))  # noqa: E731
        np.testing.assert_allclose(t.grad, numeric_grad(f, x), rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("name", ["add", "sub", "mul"])
    def test_binary_gradients(self, name, rng):
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
        ta, tb = tc.tensor(a, requires_grad=True), tc.tensor(b, requires_grad=True)
        tc.backward(tc.sum(tc.elementwise(name, ta, tb)))
        fa = lambda: float(np.sum(tc.elementwise(name, tc.tensor(a), tc.tensor(b)).data))  # noqa: E731
        np.testing.assert_allclose(ta.grad, numeric_grad(fa, a), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(tb.grad, numeric_grad(fa, b), rtol=1e-6, atol=1e-8)


class TestBackward:
    def test_sum_gives_ones(self):
        w = tc.tensor(np.zeros((2, 3, 4)), requires_grad=True)
        tc.backward(tc.sum(w))
        np.testing.assert_array_equal(w.grad, np.ones((2, 3, 4)))

    def test_square_sum(self):
        w = tc.tensor([1.0, 2.0], requires_grad=True)
        tc.backward(tc.sum(w * w))
        np.testing.assert_array_equal(w.grad, [2.0, 4.0])

    def test_two_paths_accumulate(self):
        w = tc.tensor([1.0, 2.0, 3.0], requires_grad=True)
        tc.backward(tc.sum(w * 2.0) + tc.sum(w * 3.0))
        np.testing.assert_array_equal(w.grad, [5.0, 5.0, 5.0])

    def test_non_scalar_loss(self):
        w = tc.tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            tc.backward(w * 2.0)

    def test_disconnected_loss(self):
        with pytest.raises(ContractError):
            tc.backward(tc.sum(tc.tensor([1.0, 2.0])))

    def test_select_and_narrow_gradients(self, rng):
        x = rng.standard_normal((3, 5))
        t = tc.tensor(x, requires_grad=True)
        loss = tc.sum(tc.select(t, 0, 1)) + tc.sum(tc.narrow(t, 1, 2, 3) * tc.narrow(t, 1, 2, 3))
        tc.backward(loss)
        expect = np.zeros_like(x)
        expect[1] += 1
        expect[:, 2:5] += 2 * x[:, 2:5]
        np.testing.assert_allclose(t.grad, expect)

    def test_tape_is_topological_and_complete(self, rng):
        a = tc.tensor(rng.standard_normal((2, 2)), requires_grad=True)
        b = tc.tanh(tc.matmul(a, a))
        loss = tc.sum(b * a)
        tape = tc.backward(loss)
        position = {id(t): i for i, t in enumerate(tape.entries)}
        for t in tape.entries:
            for p in t._parents:
                assert position[id(p)] < position[id(t)]
        assert len(position) == len(tape.entries)
        assert tape.entries[-1] is loss

    def test_replay_determinism(self, rng):
        x = rng.standard_normal((4, 3))

        def run():
            w = tc.tensor(x, requires_grad=True)
            loss = tc.mean(tc.sigmoid(tc.matmul(w, tc.transpose(w))))
            tc.backward(loss)
            return loss.data.tobytes(), w.grad.tobytes()

        assert run() == run()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_random_graph_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        w1 = r.standard_normal((4, 5)) * 0.5
        w2 = r.standard_normal((5, 3)) * 0.5
        x = r.standard_normal((2, 4))

        def graph(a, b):
            h = tc.tanh(tc.matmul(tc.tensor(x), a))
            z = tc.sigmoid(tc.matmul(h, b))
            return tc.mean(z * z + tc.relu(z - 0.3))

        t1, t2 = tc.tensor(w1, requires_grad=True), tc.tensor(w2, requires_grad=True)
        tc.backward(graph(t1, t2))
        for tensor_, arr in ((t1, w1), (t2, w2)):
            num = numeric_grad(lambda: graph(tc.tensor(w1), tc.tensor(w2)).item(), arr)
            err = np.abs(tensor_.grad - num) / np.maximum(np.maximum(np.abs(tensor_.grad), np.abs(num)), 1e-6)
            assert err.max() < 1e-4
