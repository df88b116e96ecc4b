"""Tests for the tensor kernel and reverse-mode differentiation."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdm.exceptions import NumericalError, ShapeError
from gbdm.numkit.autograd import backward
from gbdm.numkit.tensor import (
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    conv2d,
    default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
    roll,
    silu,
    sqrt,
    stack,
)


if TYPE_CHECKING:
    from collections.abc import Callable


class TestTensorBasics:
    """Test cases for construction and introspection."""

    @pytest.mark.unit
    def test_default_dtype_is_float32(self) -> None:
        """Test that tensors default to float32."""
        assert Tensor([1.0, 2.0]).dtype == np.float32
        assert default_dtype() == np.float32

    @pytest.mark.unit
    def test_precision_context(self) -> None:
        """Test that precision switches the dtype only inside the block."""
        with precision(np.float64):
            assert Tensor(1.0).dtype == np.float64
        assert Tensor(1.0).dtype == np.float32

    @pytest.mark.unit
    def test_leaf_copies_data(self) -> None:
        """Test that a leaf does not alias its input."""
        source = np.ones(3, dtype=np.float32)
        t = Tensor(source)
        source[0] = 5.0
        assert t.data[0] == 1.0

    @pytest.mark.unit
    def test_non_finite_leaf_rejected(self) -> None:
        """Test that NaN data cannot become a tensor."""
        with pytest.raises(NumericalError):
            Tensor([1.0, np.nan], name="bad")

    @pytest.mark.unit
    def test_item_requires_single_element(self) -> None:
        """Test item() on a vector."""
        assert Tensor([[2.5]]).item() == 2.5
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()

    @pytest.mark.unit
    def test_repr_mentions_shape(self) -> None:
        """Test the short representation."""
        assert "shape=(2,)" in repr(Tensor([1.0, 2.0], requires_grad=True, name="w"))


class TestForwardOps:
    """Test cases for forward values and error detection."""

    @pytest.mark.unit
    def test_arithmetic_with_constants(self) -> None:
        """Test mixed tensor/float arithmetic keeps float32."""
        x = Tensor([1.0, 2.0])
        out = 2.0 * x + 1.0 - x / 2.0
        np.testing.assert_allclose(out.data, [2.5, 4.0])
        assert out.dtype == np.float32

    @pytest.mark.unit
    def test_log_of_zero_raises(self) -> None:
        """Test that a non-finite forward value names the op."""
        with pytest.raises(NumericalError) as exc_info:
            Tensor([0.0]).log()
        assert exc_info.value.operation == "log"
        assert exc_info.value.stage == "forward"

    @pytest.mark.unit
    def test_matmul_shape_check(self) -> None:
        """Test that incompatible matmul shapes raise ShapeError."""
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    @pytest.mark.unit
    def test_reshape_shape_check(self) -> None:
        """Test that an impossible reshape raises ShapeError."""
        with pytest.raises(ShapeError):
            Tensor(np.ones(6)).reshape(4, 2)

    @pytest.mark.unit
    def test_softplus_large_input_is_finite(self) -> None:
        """Test that softplus does not overflow."""
        out = Tensor([1000.0, -1000.0]).softplus()
        np.testing.assert_allclose(out.data, [1000.0, 0.0], atol=1e-6)

    @pytest.mark.unit
    def test_roll_is_periodic(self) -> None:
        """Test cyclic shift."""
        np.testing.assert_array_equal(roll(Tensor([1.0, 2.0, 3.0]), 1, 0).data, [3.0, 1.0, 2.0])


class TestTape:
    """Test cases for tape recording."""

    @pytest.mark.unit
    def test_records_when_input_requires_grad(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that ops on trainable leaves get a tape node."""
        x = make_tensor([1.0])
        y = x * 2.0
        assert y.requires_grad
        assert y.node is not None
        assert y.node.op == "mul"

    @pytest.mark.unit
    def test_constants_are_not_recorded(self) -> None:
        """Test that constant-only ops leave no tape node."""
        y = Tensor([1.0]) * 2.0
        assert y.node is None

    @pytest.mark.unit
    def test_no_grad_disables_recording(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test the no_grad context."""
        x = make_tensor([1.0])
        with no_grad():
            assert not is_grad_enabled()
            y = x * 2.0
        assert y.node is None
        assert is_grad_enabled()

    @pytest.mark.unit
    def test_detach_cuts_tape(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that detach returns a constant."""
        y = (make_tensor([1.0]) * 3.0).detach()
        assert not y.requires_grad
        assert y.node is None


class TestBackward:
    """Test cases for gradients against finite differences."""

    @pytest.mark.unit
    def test_identity_gradient(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test d/dx x = 1 at x = 3."""
        x = make_tensor(3.0)
        grads = backward(x, [x])
        assert grads[x] == pytest.approx(1.0)

    @pytest.mark.unit
    def test_sin_times_x(
        self,
        float64: None,
        make_tensor: Callable[..., Tensor],
        fd: Callable[..., np.ndarray],
    ) -> None:
        """Test d/dx sin(x) x at 0.7 against a central difference with step 1e-4."""
        x = make_tensor(0.7)
        grads = backward(x.sin() * x, [x])
        expected = fd(lambda v: float(np.sin(v) * v), np.array(0.7), 1e-4)
        assert float(grads[x]) == pytest.approx(float(expected), rel=1e-4)

    @pytest.mark.unit
    def test_shared_subexpression_accumulates(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that gradients along several paths are summed."""
        x = make_tensor(2.0)
        y = x * x + x
        assert float(backward(y, [x])[x]) == pytest.approx(5.0)

    @pytest.mark.unit
    def test_unused_parameter_gets_zero(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that a parameter off the graph gets a zero gradient."""
        x = make_tensor([1.0, 2.0])
        unused = make_tensor([[3.0]])
        grads = backward((x * x).sum(), [x, unused])
        np.testing.assert_array_equal(grads[unused], np.zeros((1, 1)))

    @pytest.mark.unit
    def test_non_scalar_loss_rejected(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that backward needs a scalar."""
        with pytest.raises(ShapeError):
            backward(make_tensor([1.0, 2.0]) * 2.0)

    @pytest.mark.unit
    def test_non_finite_gradient_names_op(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that an infinite gradient raises in the backward stage."""
        x = make_tensor([0.0])
        with pytest.raises(NumericalError) as exc_info:
            backward(sqrt(x).sum(), [x])
        assert exc_info.value.stage == "backward"
        assert exc_info.value.operation == "sqrt"

    @pytest.mark.unit
    def test_broadcast_gradient_is_reduced(self, make_tensor: Callable[..., Tensor]) -> None:
        """Test that a broadcast bias receives the summed gradient."""
        x = make_tensor(np.ones((4, 3)))
        b = make_tensor(np.zeros(3))
        grads = backward((x + b).sum(), [b])
        np.testing.assert_allclose(grads[b], [4.0, 4.0, 4.0])

    @pytest.mark.unit
    def test_composite_ops_match_finite_differences(
        self,
        float64: None,
        make_tensor: Callable[..., Tensor],
        fd: Callable[..., np.ndarray],
    ) -> None:
        """Test a chain of shape ops, reductions and nonlinearities."""
        rng = np.random.default_rng(0)
        w0 = rng.normal(size=(3, 4))

        def forward(w: Tensor) -> Tensor:
            h = silu(w @ as_tensor(np.ones((4, 2)), like=w))
            parts = concat([h, h.tanh()], axis=1)
            stacked = stack([parts, broadcast_to(parts[0:1], parts.shape)], axis=0)
            return (stacked.softplus() * stacked.sigmoid()).mean() + (w.exp() ** 2.0).sum() * 0.01

        w = make_tensor(w0)
        grads = backward(forward(w), [w])
        expected = fd(lambda v: forward(Tensor(v)).item(), w0)
        np.testing.assert_allclose(grads[w], expected, rtol=1e-5, atol=1e-8)

    @pytest.mark.unit
    @given(st.floats(min_value=-3.0, max_value=3.0))
    @settings(max_examples=25, deadline=None)
    def test_hypothesis_cos_gradient(self, value: float) -> None:
        """Property-based test: d/dx cos(x) = -sin(x)."""
        with precision(np.float64):
            x = Tensor(value, requires_grad=True)
            grads = backward(x.cos(), [x])
        assert float(grads[x]) == pytest.approx(-np.sin(value), abs=1e-12)


class TestConv2d:
    """Test cases for the convolution op."""

    @pytest.mark.unit
    def test_kernel_gradient_matches_finite_differences(
        self,
        float64: None,
        make_tensor: Callable[..., Tensor],
        fd: Callable[..., np.ndarray],
    ) -> None:
        """Test 1 channel, 4x4 input, 3x3 kernel, padding 1 within relative 1e-3."""
        rng = np.random.default_rng(1)
        x0 = rng.normal(size=(1, 1, 4, 4))
        k0 = rng.normal(size=(1, 1, 3, 3))
        target = rng.normal(size=(1, 1, 4, 4))
        x = Tensor(x0)
        k = make_tensor(k0)

        def loss(kernel: Tensor) -> Tensor:
            diff = conv2d(x, kernel, padding=1) - as_tensor(target, like=kernel)
            return (diff * diff).sum()

        grads = backward(loss(k), [k])
        expected = fd(lambda v: loss(Tensor(v)).item(), k0)
        np.testing.assert_allclose(grads[k], expected, rtol=1e-3)

    @pytest.mark.unit
    def test_strided_input_and_bias_gradients(
        self,
        float64: None,
        make_tensor: Callable[..., Tensor],
        fd: Callable[..., np.ndarray],
    ) -> None:
        """Test input and bias gradients of a stride-2 multi-channel convolution."""
        rng = np.random.default_rng(2)
        x0 = rng.normal(size=(2, 2, 5, 5))
        w = Tensor(rng.normal(size=(3, 2, 3, 3)))
        b0 = rng.normal(size=(3,))
        x = make_tensor(x0)
        b = make_tensor(b0)

        def loss(inp: Tensor, bias: Tensor) -> Tensor:
            return conv2d(inp, w, bias, stride=2, padding=1).square().sum()

        grads = backward(loss(x, b), [x, b])
        assert conv2d(x, w, b, stride=2, padding=1).shape == (2, 3, 3, 3)
        np.testing.assert_allclose(grads[x], fd(lambda v: loss(Tensor(v), b).item(), x0), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(grads[b], fd(lambda v: loss(x, Tensor(v)).item(), b0), rtol=1e-5, atol=1e-8)

    @pytest.mark.unit
    def test_channel_mismatch_raises(self) -> None:
        """Test that channel counts must agree."""
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 1, 3, 3))))
