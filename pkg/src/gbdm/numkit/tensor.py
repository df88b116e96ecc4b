"""Dense tensors with a reverse-mode tape.

A ``Tensor`` wraps a NumPy array (float32 unless a wider precision is
selected with :func:`precision`). Every differentiable operation checks its
result for NaN/Inf, and when gradients are enabled and any input requires
them, records a :class:`TapeNode` holding the inputs and a closure that maps
the output gradient to input gradients. :func:`backward` walks those nodes
in reverse topological order.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gbdm.exceptions import NumericalError, ShapeError


if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence

    from numpy.typing import ArrayLike, DTypeLike

    BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar("gbdm_grad_enabled", default=True)
_DEFAULT_DTYPE: contextvars.ContextVar[np.dtype[Any]] = contextvars.ContextVar(
    "gbdm_default_dtype",
    default=np.dtype(np.float32),
)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (evaluation and rollouts)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


@contextlib.contextmanager
def precision(dtype: DTypeLike) -> Iterator[None]:
    """Create new tensors with ``dtype`` inside the block.

    Production code runs in float32; gradient checks switch to float64.
    """
    token = _DEFAULT_DTYPE.set(np.dtype(dtype))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


def is_grad_enabled() -> bool:
    """Return whether operations are currently recorded on the tape."""
    return _GRAD_ENABLED.get()


def default_dtype() -> np.dtype[Any]:
    """Return the dtype new tensors are created with."""
    return _DEFAULT_DTYPE.get()


@dataclass(frozen=True, slots=True)
class TapeNode:
    """One recorded operation: its name, inputs and backward closure."""

    op: str
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tensor:
    """An immutable dense array that may participate in reverse-mode autodiff.

    Attributes:
        data: The underlying array. Optimizers rebind it; ops never mutate it.
        requires_grad: Whether gradients flow to (or through) this tensor.
        node: The tape node that produced this tensor, ``None`` for leaves.
        name: Optional label used in checkpoints and error messages.
    """

    __slots__ = ("data", "name", "node", "requires_grad")
    __array_priority__ = 100

    def __init__(
        self,
        data: ArrayLike,
        *,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        """Wrap ``data`` as a leaf tensor in the current default dtype."""
        arr = np.array(data, dtype=default_dtype(), copy=True)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(name or "tensor", "forward", details="leaf data is not finite")
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.node: TapeNode | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> Tensor:
        out = cls.__new__(cls)
        out.data = arr
        out.requires_grad = False
        out.node = None
        out.name = None
        return out

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        """Dimension sizes."""
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        """Number of dimensions."""
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        """Number of elements."""
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        """Element dtype."""
        return self.data.dtype

    def __len__(self) -> int:
        """Return the size of the leading dimension."""
        return int(self.data.shape[0])

    def __repr__(self) -> str:
        """Return a short description of the tensor."""
        grad = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{grad}{label})"

    def item(self) -> float:
        """Return the single element as a Python float."""
        if self.size != 1:
            raise ShapeError("item", "a single element", self.shape)
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Return a copy of the data."""
        return self.data.copy()

    def detach(self) -> Tensor:
        """Return a tensor sharing the data but cut from the tape."""
        return Tensor._wrap(self.data)

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: Operand) -> Tensor:
        """Elementwise sum with broadcasting."""
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        """Elementwise sum with broadcasting."""
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        """Elementwise difference with broadcasting."""
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        """Elementwise difference with broadcasting."""
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        """Elementwise product with broadcasting."""
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        """Elementwise product with broadcasting."""
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        """Elementwise quotient with broadcasting."""
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> Tensor:
        """Elementwise quotient with broadcasting."""
        return div(other, self)

    def __neg__(self) -> Tensor:
        """Elementwise negation."""
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        """Raise to a constant power."""
        return power(self, exponent)

    def __matmul__(self, other: Operand) -> Tensor:
        """Matrix product over the last two axes."""
        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> Tensor:
        """Matrix product over the last two axes."""
        return matmul(other, self)

    def __getitem__(self, index: Any) -> Tensor:  # noqa: ANN401
        """Slice or index (differentiable)."""
        return getitem(self, index)

    # ------------------------------------------------------------------
    # Method forms of the unary ops
    # ------------------------------------------------------------------

    def sum(self, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False) -> Tensor:
        """Sum over ``axis`` (all axes by default)."""
        return reduce_sum(self, axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False) -> Tensor:
        """Mean over ``axis`` (all axes by default)."""
        return reduce_mean(self, axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        """Return the same values with a new shape."""
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes: int) -> Tensor:
        """Permute axes (reverse them when none are given)."""
        return transpose(self, axes or None)

    def exp(self) -> Tensor:
        """Elementwise exponential."""
        return exp(self)

    def log(self) -> Tensor:
        """Elementwise natural logarithm."""
        return log(self)

    def sin(self) -> Tensor:
        """Elementwise sine."""
        return sin(self)

    def cos(self) -> Tensor:
        """Elementwise cosine."""
        return cos(self)

    def tanh(self) -> Tensor:
        """Elementwise hyperbolic tangent."""
        return tanh(self)

    def sigmoid(self) -> Tensor:
        """Elementwise logistic function."""
        return sigmoid(self)

    def softplus(self) -> Tensor:
        """Elementwise log(1 + exp(x))."""
        return softplus(self)

    def square(self) -> Tensor:
        """Elementwise square."""
        return square(self)


Operand = Tensor | float | int | np.ndarray


# ----------------------------------------------------------------------
# Construction helpers
# ----------------------------------------------------------------------


def as_tensor(value: Operand, *, like: Tensor | None = None) -> Tensor:
    """Return ``value`` as a tensor, converting constants to ``like``'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else default_dtype()
    return Tensor._wrap(np.asarray(value, dtype=dtype))


def parameter(data: ArrayLike, name: str | None = None) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(data, requires_grad=True, name=name)


def zeros(shape: Sequence[int]) -> Tensor:
    """Constant zeros in the default dtype."""
    return Tensor._wrap(np.zeros(tuple(shape), dtype=default_dtype()))


def ones(shape: Sequence[int]) -> Tensor:
    """Constant ones in the default dtype."""
    return Tensor._wrap(np.ones(tuple(shape), dtype=default_dtype()))


def _record(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NumericalError(op, "forward")
    result = Tensor._wrap(out)
    if _GRAD_ENABLED.get() and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        result.node = TapeNode(op, inputs, backward)
    return result


def _pair(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after NumPy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ----------------------------------------------------------------------
# Binary ops
# ----------------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    """Elementwise ``a + b``."""
    x, y = _pair(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return _record("add", x.data + y.data, (x, y), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    """Elementwise ``a - b``."""
    x, y = _pair(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return _record("sub", x.data - y.data, (x, y), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise ``a * b``."""
    x, y = _pair(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return _record("mul", x.data * y.data, (x, y), backward)


def div(a: Operand, b: Operand) -> Tensor:
    """Elementwise ``a / b``."""
    x, y = _pair(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (
            _unbroadcast(g / y.data, x.shape),
            _unbroadcast(-g * x.data / (y.data * y.data), y.shape),
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        out = x.data / y.data
    return _record("div", out, (x, y), backward)


def matmul(a: Operand, b: Operand) -> Tensor:
    """Matrix product over the last two axes, batching over the rest."""
    x, y = _pair(a, b)
    if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:  # noqa: PLR2004
        raise ShapeError("matmul", "(..., n, k) @ (..., k, m)", (x.shape, y.shape))

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        gx = g @ np.swapaxes(y.data, -1, -2)
        gy = np.swapaxes(x.data, -1, -2) @ g
        return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

    return _record("matmul", x.data @ y.data, (x, y), backward)


# ----------------------------------------------------------------------
# Unary ops
# ----------------------------------------------------------------------


def neg(a: Tensor) -> Tensor:
    """Elementwise negation."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (-g,)

    return _record("neg", -a.data, (a,), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * exponent * np.power(a.data, exponent - 1),)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(a.data, exponent)
    return _record("pow", out, (a,), backward)


def square(a: Tensor) -> Tensor:
    """Elementwise square."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (2.0 * a.data * g,)

    return _record("square", a.data * a.data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root."""
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / (2.0 * out),)

    return _record("sqrt", out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    """Elementwise exponential."""
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * out,)

    return _record("exp", out, (a,), backward)


def log(a: Tensor) -> Tensor:
    """Elementwise natural logarithm."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g / a.data,)

    return _record("log", out, (a,), backward)


def sin(a: Tensor) -> Tensor:
    """Elementwise sine."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * np.cos(a.data),)

    return _record("sin", np.sin(a.data), (a,), backward)


def cos(a: Tensor) -> Tensor:
    """Elementwise cosine."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (-g * np.sin(a.data),)

    return _record("cos", np.cos(a.data), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent."""
    out = np.tanh(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * (1.0 - out * out),)

    return _record("tanh", out, (a,), backward)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid(a: Tensor) -> Tensor:
    """Elementwise logistic function."""
    out = _stable_sigmoid(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * out * (1.0 - out),)

    return _record("sigmoid", out, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """Elementwise ``log(1 + exp(a))``, computed without overflow."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * _stable_sigmoid(a.data),)

    return _record("softplus", np.logaddexp(0.0, a.data).astype(a.dtype, copy=False), (a,), backward)


def silu(a: Tensor) -> Tensor:
    """Elementwise ``a * sigmoid(a)``."""
    s = _stable_sigmoid(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g * (s + a.data * s * (1.0 - s)),)

    return _record("silu", a.data * s, (a,), backward)


# ----------------------------------------------------------------------
# Reductions and shape ops
# ----------------------------------------------------------------------


def _expand_reduced(
    g: np.ndarray,
    shape: tuple[int, ...],
    axis: int | tuple[int, ...] | None,
    *,
    keepdims: bool,
) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        g = np.expand_dims(g, tuple(ax % len(shape) for ax in axes))
    return np.broadcast_to(g, shape).copy()


def reduce_sum(a: Tensor, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False) -> Tensor:
    """Sum over ``axis``."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (_expand_reduced(g, a.shape, axis, keepdims=keepdims),)

    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)
    return _record("sum", out, (a,), backward)


def reduce_mean(a: Tensor, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False) -> Tensor:
    """Mean over ``axis``."""
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims), dtype=a.dtype)
    count = a.size // max(out.size, 1)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (_expand_reduced(g, a.shape, axis, keepdims=keepdims) / count,)

    return _record("mean", out, (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Return ``a`` with a new shape."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g.reshape(a.shape),)

    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError("reshape", tuple(shape), a.shape) from e
    return _record("reshape", out, (a,), backward)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute the axes of ``a``."""
    perm = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(perm))

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (g.transpose(inverse),)

    return _record("transpose", a.data.transpose(perm), (a,), backward)


def getitem(a: Tensor, index: Any) -> Tensor:  # noqa: ANN401
    """Differentiable indexing; repeated indices accumulate in the gradient."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record("slice", np.array(a.data[index], dtype=a.dtype), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``."""
    if not tensors:
        raise ShapeError("concat", "at least one tensor", 0)
    parts = tuple(tensors)
    sizes = [t.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError as e:
        raise ShapeError("concat", "matching non-concatenated dims", [t.shape for t in parts]) from e

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", out, parts, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack along a new ``axis``."""
    parts = tuple(tensors)
    try:
        out = np.stack([t.data for t in parts], axis=axis)
    except ValueError as e:
        raise ShapeError("stack", "identical shapes", [t.shape for t in parts]) from e

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _record("stack", out, parts, backward)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast ``a`` to ``shape``."""
    target = tuple(shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (_unbroadcast(g, a.shape),)

    try:
        out = np.broadcast_to(a.data, target).copy()
    except ValueError as e:
        raise ShapeError("broadcast_to", target, a.shape) from e
    return _record("broadcast_to", out, (a,), backward)


def roll(a: Tensor, shift: int, axis: int) -> Tensor:
    """Cyclic shift along ``axis`` (periodic boundaries)."""

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.roll(g, -shift, axis=axis),)

    return _record("roll", np.roll(a.data, shift, axis=axis), (a,), backward)


# ----------------------------------------------------------------------
# Convolution
# ----------------------------------------------------------------------


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of ``x`` (N, C, H, W) with ``weight`` (O, C, kh, kw).

    Zero padding is applied symmetrically. The window gather uses
    ``sliding_window_view`` so no explicit im2col buffer is built.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:  # noqa: PLR2004
        raise ShapeError("conv2d", "(N, C, H, W) * (O, C, kh, kw)", (x.shape, weight.shape))
    kh, kw = weight.shape[2], weight.shape[3]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError("conv2d", f"spatial size >= kernel ({kh}, {kw})", x.shape)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gwin = np.tensordot(g, weight.data, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gwin[..., i, j].transpose(
                    0,
                    3,
                    1,
                    2,
                )
        gx = gxp[:, :, padding : gxp.shape[2] - padding, padding : gxp.shape[3] - padding] if padding else gxp
        grads: tuple[np.ndarray | None, ...] = (gx, gw)
        if bias is not None:
            grads = (*grads, g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record("conv2d", out, inputs, backward)
