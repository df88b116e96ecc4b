"""Dense, recurrent and convolutional layers."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError, ValidationError
from gbdm.nets.module import Module
from gbdm.numkit.tensor import Tensor, concat, conv2d, parameter, silu, zeros


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from gbdm.numkit.random import Rng


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "silu": silu,
    "tanh": lambda x: x.tanh(),
}


class Linear(Module):
    """Affine map ``x @ W + b`` with uniform fan-in initialization.

    ``zero_init`` starts both weight and bias at zero, so a freshly built
    output layer returns exactly zero.
    """

    def __init__(self, n_in: int, n_out: int, rng: Rng, *, zero_init: bool = False) -> None:
        """Create the layer; weights are drawn from ``rng``."""
        self.n_in = n_in
        self.n_out = n_out
        bound = 1.0 / math.sqrt(n_in)
        if zero_init:
            self.weight = parameter(np.zeros((n_in, n_out)), name="weight")
            self.bias = parameter(np.zeros((n_out,)), name="bias")
        else:
            self.weight = parameter(rng.uniform((n_in, n_out), -bound, bound), name="weight")
            self.bias = parameter(rng.uniform((n_out,), -bound, bound), name="bias")

    def __call__(self, x: Tensor) -> Tensor:
        """Apply the layer to ``x`` of shape ``(B, n_in)``."""
        if x.ndim != 2 or x.shape[1] != self.n_in:  # noqa: PLR2004
            raise ShapeError("Linear", ("B", self.n_in), x.shape)
        return x @ self.weight + self.bias


class MLP(Module):
    """Stack of linear layers with an activation between them."""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: Rng,
        *,
        activation: str = "silu",
        zero_last: bool = False,
    ) -> None:
        """Build layers ``sizes[0] -> sizes[1] -> ... -> sizes[-1]``.

        Raises:
            ValidationError: For fewer than two sizes or an unknown activation.
        """
        if len(sizes) < 2:  # noqa: PLR2004
            raise ValidationError(field="sizes", value=list(sizes), reason="needs input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValidationError(field="activation", value=activation, reason=f"must be one of {sorted(ACTIVATIONS)}")
        self.activation = activation
        n_layers = len(sizes) - 1
        self.layers = [
            Linear(sizes[i], sizes[i + 1], rng.spawn(i), zero_init=zero_last and i == n_layers - 1)
            for i in range(n_layers)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        """Apply the stack; no activation after the last layer."""
        act = ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x


class GRU(Module):
    """Single-layer gated recurrent unit over ``(B, L, n_in)`` sequences."""

    def __init__(self, n_in: int, hidden: int, rng: Rng) -> None:
        """Create input and recurrent weights for the update, reset and candidate gates."""
        self.n_in = n_in
        self.hidden = hidden
        bound = 1.0 / math.sqrt(hidden)
        self.w_x = parameter(rng.stream("w_x").uniform((n_in, 3 * hidden), -bound, bound), name="w_x")
        self.w_h = parameter(rng.stream("w_h").uniform((hidden, 3 * hidden), -bound, bound), name="w_h")
        self.b_x = parameter(rng.stream("b_x").uniform((3 * hidden,), -bound, bound), name="b_x")
        self.b_h = parameter(rng.stream("b_h").uniform((3 * hidden,), -bound, bound), name="b_h")

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        """One recurrence ``h' = (1 - u) * n + u * h``."""
        k = self.hidden
        gx = x @ self.w_x + self.b_x
        gh = h @ self.w_h + self.b_h
        update = (gx[:, :k] + gh[:, :k]).sigmoid()
        reset = (gx[:, k : 2 * k] + gh[:, k : 2 * k]).sigmoid()
        candidate = (gx[:, 2 * k :] + reset * gh[:, 2 * k :]).tanh()
        return candidate + update * (h - candidate)

    def __call__(self, seq: Tensor) -> Tensor:
        """Run over the sequence and return the final hidden state ``(B, hidden)``."""
        if seq.ndim != 3 or seq.shape[2] != self.n_in:  # noqa: PLR2004
            raise ShapeError("GRU", ("B", "L", self.n_in), seq.shape)
        h = zeros((seq.shape[0], self.hidden))
        for j in range(seq.shape[1]):
            h = self.step(seq[:, j, :], h)
        return h


class Conv2d(Module):
    """2-D convolution layer over ``(B, C, H, W)`` maps."""

    def __init__(  # noqa: PLR0913
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: Rng,
        *,
        stride: int = 1,
        padding: int = 0,
        zero_init: bool = False,
    ) -> None:
        """Create the kernel ``(c_out, c_in, kernel, kernel)`` and bias."""
        self.stride = stride
        self.padding = padding
        shape = (c_out, c_in, kernel, kernel)
        bound = 1.0 / math.sqrt(c_in * kernel * kernel)
        if zero_init:
            self.weight = parameter(np.zeros(shape), name="weight")
            self.bias = parameter(np.zeros((c_out,)), name="bias")
        else:
            self.weight = parameter(rng.uniform(shape, -bound, bound), name="weight")
            self.bias = parameter(rng.uniform((c_out,), -bound, bound), name="bias")

    def __call__(self, x: Tensor) -> Tensor:
        """Convolve ``x``."""
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


def feature_concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate ``(B, n_i)`` feature blocks along the last axis."""
    return concat(list(parts), axis=1)
