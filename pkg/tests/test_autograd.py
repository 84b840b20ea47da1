"""Engine-level tests: primitives, accumulation, the tape, and grad_check."""

import numpy as np
import pytest

from shiftseq.errors import DimensionError, UsageError
from shiftseq.tensor_autograd import (
    GradCheckReport,
    Tensor,
    accumulate_grad,
    add,
    backward,
    concat,
    grad_check,
    matmul,
    mul,
    reduce_sum,
    reshape,
    scale,
    select_time,
    sigmoid,
    slice_channels,
    slice_rows,
    stack_time,
    sum_all,
    tanh,
    track,
    transpose,
)


def rand(shape, seed=0, dtype=np.float64):
    return Tensor(np.random.default_rng(seed).standard_normal(shape), dtype=dtype)


class TestTensor:
    def test_defaults_to_float32(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.dtype == np.float32
        assert t.shape == (2, 2)
        assert not t.requires_grad

    def test_float64_preserved(self):
        t = Tensor(np.zeros(3, dtype=np.float64))
        assert t.dtype == np.float64

    def test_rank_limit(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_item_rejects_nonscalar(self):
        with pytest.raises(UsageError):
            Tensor([1.0, 2.0]).item()


class TestPrimitives:
    def test_add_mul_forward(self):
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 5.0])
        assert np.array_equal(add(a, b).data, [4.0, 7.0])
        assert np.array_equal(mul(a, b).data, [3.0, 10.0])

    def test_add_broadcast_gradient(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        backward(sum_all(add(a, b)))
        assert np.array_equal(a.grad, np.ones((2, 3)))
        assert np.array_equal(b.grad, np.full(3, 2.0))

    def test_mixed_dtype_rejected(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros(2, np.float32)), Tensor(np.zeros(2, np.float64)))

    def test_scale_keeps_dtype(self):
        t = scale(Tensor(np.ones(2, np.float32)), 0.5)
        assert t.dtype == np.float32
        assert np.allclose(t.data, 0.5)

    def test_matmul_matches_numpy_batched(self):
        a = rand((2, 3, 4, 5), 1)
        b = rand((2, 3, 5, 6), 2)
        assert np.allclose(matmul(a, b).data, a.data @ b.data)

    def test_matmul_weight_gradient_sums_batches(self):
        x = Tensor(np.ones((2, 3, 4)), requires_grad=True)
        w = Tensor(np.ones((4, 5)), requires_grad=True)
        backward(sum_all(matmul(x, w)))
        assert w.grad.shape == (4, 5)
        assert np.allclose(w.grad, 6.0)

    def test_matmul_shape_errors(self):
        with pytest.raises(DimensionError):
            matmul(rand((2, 3)), rand((4, 5)))
        with pytest.raises(DimensionError):
            matmul(rand((2, 3, 4)), rand((3, 4, 5)))

    def test_transpose_roundtrip_gradient(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
        y = transpose(x, (2, 0, 1))
        assert y.shape == (4, 2, 3)
        backward(sum_all(mul(y, y)))
        assert np.allclose(x.grad, 2 * x.data)

    def test_concat_and_slices(self):
        a = Tensor(np.ones((1, 2, 3)), requires_grad=True)
        b = Tensor(np.full((1, 2, 2), 2.0), requires_grad=True)
        c = concat([a, b], axis=2)
        assert c.shape == (1, 2, 5)
        left = slice_channels(c, 0, 3)
        backward(sum_all(left))
        assert np.allclose(a.grad, 1.0)
        assert np.allclose(b.grad, 0.0)

    def test_select_and_stack_time(self):
        x = Tensor(np.arange(12.0).reshape(2, 3, 2), requires_grad=True)
        frames = [select_time(x, t) for t in range(3)]
        y = stack_time(frames)
        assert np.array_equal(y.data, x.data)
        backward(sum_all(y))
        assert np.allclose(x.grad, 1.0)

    def test_slice_rows(self):
        x = Tensor(np.arange(10.0).reshape(5, 2), requires_grad=True)
        y = slice_rows(x, 3)
        assert np.array_equal(y.data, x.data[:3])
        backward(sum_all(y))
        assert np.allclose(x.grad[:3], 1.0)
        assert np.allclose(x.grad[3:], 0.0)

    def test_reduce_sum_axis(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        y = reduce_sum(x, axis=1)
        assert np.array_equal(y.data, [3.0, 12.0])
        backward(sum_all(y))
        assert np.allclose(x.grad, 1.0)

    def test_sigmoid_tanh_values(self):
        x = Tensor([0.0])
        assert np.allclose(sigmoid(x).data, 0.5)
        assert np.allclose(tanh(x).data, 0.0)


class TestBackward:
    def test_identity_loss_grad_is_one(self):
        x = Tensor(np.asarray(3.0), requires_grad=True)
        backward(scale(x, 1.0))
        assert np.allclose(x.grad, 1.0)

    def test_sum_of_squares_grad(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        backward(sum_all(mul(x, x)))
        assert np.allclose(x.grad, 2 * x.data)

    def test_nonscalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(UsageError):
            backward(mul(x, x))

    def test_reuse_accumulates_both_paths(self):
        # f(x) = sum(x*x) + sum(3*x) so df/dx = 2x + 3 through two uses of x.
        x = Tensor([1.0, -1.0, 2.0], requires_grad=True)
        backward(add(sum_all(mul(x, x)), sum_all(scale(x, 3.0))))
        assert np.allclose(x.grad, 2 * x.data + 3.0)

    def test_reuse_matches_finite_differences(self):
        def f(x):
            y = add(mul(x, x), scale(x, 0.5))
            return add(sum_all(y), sum_all(tanh(x)))

        report = grad_check(f, [rand((2, 3), 7)], tol=1e-5)
        assert report.passed, str(report)

    def test_tape_cleared_after_backward(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        mid = mul(x, x)
        loss = sum_all(mid)
        backward(loss)
        assert loss._parents == () and loss._backward is None
        assert mid._parents == () and mid._backward is None

    def test_no_graph_without_requires_grad(self):
        y = mul(Tensor([1.0]), Tensor([2.0]))
        assert y._parents == () and not y.requires_grad


class TestGradCheck:
    def test_linear_map_passes_tightly(self):
        w = np.random.default_rng(3).standard_normal((4, 4))

        def f(x):
            return matmul(x, Tensor(w))

        report = grad_check(f, [rand((2, 4), 11)], tol=1e-5)
        assert report.passed
        # A linear map's central difference is exact up to rounding.
        assert report.max_rel_err < 1e-7

    def test_corrupted_backward_rule_fails(self):
        def broken_double(x):
            out = x.data * 2.0

            def bwd(g):
                accumulate_grad(x, g * 3.0)  # wrong on purpose

            return track(out, (x,), bwd)

        report = grad_check(broken_double, [rand((3,), 5)], tol=1e-5)
        assert not report.passed

    def test_report_formatting(self):
        report = GradCheckReport(tol=1e-5, step=1e-3, per_input=[1e-9])
        assert "pass" in str(report)
