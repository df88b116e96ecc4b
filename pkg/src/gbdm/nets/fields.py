"""Conditional vector fields v(x_t | t, θ, z), first and second order.

Outputs are in normalized-time units before composition with the physics
term. Every output layer starts at zero, so a fresh grey-box model predicts
with the physics term alone.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError
from gbdm.nets.layers import MLP, Conv2d, feature_concat
from gbdm.nets.module import Module
from gbdm.numkit.tensor import as_tensor, broadcast_to, concat, silu


if TYPE_CHECKING:
    from gbdm.nets.priors import DataStats, PriorSpec
    from gbdm.numkit.random import Rng
    from gbdm.numkit.tensor import Operand, Tensor


def time_column(t: Operand, like: Tensor) -> Tensor:
    """Normalized time as a ``(B, 1)`` column for a batch shaped like ``like``."""
    time = as_tensor(t, like=like)
    batch = like.shape[0]
    if time.size == 1:
        return broadcast_to(time.reshape(1, 1), (batch, 1))
    if time.size != batch:
        raise ShapeError("vector_field", f"one time per row ({batch})", time.shape)
    return time.reshape(batch, 1)


class _Conditioning(Module):
    """Shared bookkeeping for the (t, θ, z) conditioning inputs."""

    def _setup(
        self,
        obs_shape: tuple[int, ...],
        z_dim: int,
        prior: PriorSpec,
        stats: DataStats,
        *,
        use_theta: bool,
    ) -> None:
        self.obs_shape = tuple(obs_shape)
        self.obs_size = int(np.prod(self.obs_shape))
        self.z_dim = z_dim
        self.prior = prior
        self.stats = stats
        self.use_theta = use_theta and prior.theta_dim > 0

    @property
    def cond_dim(self) -> int:
        """Width of the (t, θ, z) block."""
        return 1 + (self.prior.theta_dim if self.use_theta else 0) + self.z_dim

    def _check(self, x_t: Tensor) -> None:
        if x_t.ndim != len(self.obs_shape) + 1 or x_t.shape[1:] != self.obs_shape:
            raise ShapeError("vector_field", ("B", *self.obs_shape), x_t.shape)

    def _condition(self, x_t: Tensor, t: Operand, theta: Tensor | None, z: Tensor | None) -> Tensor:
        batch = x_t.shape[0]
        parts = [time_column(t, x_t)]
        if self.use_theta:
            if theta is None or theta.shape != (batch, self.prior.theta_dim):
                raise ShapeError("vector_field", (batch, self.prior.theta_dim), None if theta is None else theta.shape)
            mean = as_tensor(self.prior.theta_mean, like=x_t)
            inv_std = as_tensor(1.0 / self.prior.theta_std, like=x_t)
            parts.append((theta - mean) * inv_std)
        if self.z_dim:
            if z is None or z.shape != (batch, self.z_dim):
                raise ShapeError("vector_field", (batch, self.z_dim), None if z is None else z.shape)
            parts.append(z)
        return feature_concat(parts)


class VectorField(_Conditioning):
    """MLP field over the concatenation of (x_t, t, θ, z)."""

    def __init__(  # noqa: PLR0913
        self,
        *,
        obs_shape: tuple[int, ...],
        z_dim: int,
        prior: PriorSpec,
        stats: DataStats,
        rng: Rng,
        use_theta: bool = True,
        hidden: int = 128,
        depth: int = 4,
    ) -> None:
        """Build ``depth`` hidden layers of width ``hidden`` with a zero output layer."""
        self._setup(obs_shape, z_dim, prior, stats, use_theta=use_theta)
        sizes = [self.obs_size + self.cond_dim, *([hidden] * depth), self.obs_size]
        self.net = MLP(sizes, rng.stream("net"), zero_last=True)

    def __call__(self, x_t: Tensor, t: Operand, theta: Tensor | None, z: Tensor | None) -> Tensor:
        """Velocity at ``x_t`` shaped like ``x_t``."""
        self._check(x_t)
        batch = x_t.shape[0]
        scaled = (x_t * (1.0 / self.stats.state_scale)).reshape(batch, self.obs_size)
        out = self.net(feature_concat([scaled, self._condition(x_t, t, theta, z)]))
        return out.reshape(batch, *self.obs_shape) * self.stats.step_scale


class ConvField(_Conditioning):
    """Convolutional field over a grid with (t, θ, z) broadcast as extra channels."""

    def __init__(  # noqa: PLR0913
        self,
        *,
        obs_shape: tuple[int, ...],
        z_dim: int,
        prior: PriorSpec,
        stats: DataStats,
        rng: Rng,
        use_theta: bool = True,
        channels: int = 32,
    ) -> None:
        """Build three 3x3 convolutions; the last one starts at zero."""
        self._setup(obs_shape, z_dim, prior, stats, use_theta=use_theta)
        c = obs_shape[0]
        self.convs = [
            Conv2d(c + self.cond_dim, channels, 3, rng.spawn(0), padding=1),
            Conv2d(channels, channels, 3, rng.spawn(1), padding=1),
            Conv2d(channels, c, 3, rng.spawn(2), padding=1, zero_init=True),
        ]

    def __call__(self, x_t: Tensor, t: Operand, theta: Tensor | None, z: Tensor | None) -> Tensor:
        """Velocity on the grid, shaped like ``x_t``."""
        self._check(x_t)
        batch, _, h, w = x_t.shape
        cond = self._condition(x_t, t, theta, z).reshape(batch, self.cond_dim, 1, 1)
        maps = concat([x_t * (1.0 / self.stats.state_scale), broadcast_to(cond, (batch, self.cond_dim, h, w))], axis=1)
        for i, conv in enumerate(self.convs):
            maps = conv(maps)
            if i < len(self.convs) - 1:
                maps = silu(maps)
        return maps * self.stats.step_scale


class SecondOrderField(_Conditioning):
    """Shared backbone with a velocity head and an acceleration head.

    The acceleration head additionally reads the current velocity.
    """

    def __init__(  # noqa: PLR0913
        self,
        *,
        obs_shape: tuple[int, ...],
        z_dim: int,
        prior: PriorSpec,
        stats: DataStats,
        rng: Rng,
        use_theta: bool = True,
        hidden: int = 64,
    ) -> None:
        """Build the shared MLP [hidden, hidden] and two [hidden, hidden] heads."""
        self._setup(obs_shape, z_dim, prior, stats, use_theta=use_theta)
        self.backbone = MLP([self.obs_size + self.cond_dim, hidden, hidden], rng.stream("backbone"))
        self.v_head = MLP([hidden, hidden, hidden, self.obs_size], rng.stream("v_head"), zero_last=True)
        self.a_head = MLP([hidden + self.obs_size, hidden, hidden, self.obs_size], rng.stream("a_head"), zero_last=True)

    def __call__(
        self,
        x_t: Tensor,
        dx_t: Tensor,
        t: Operand,
        theta: Tensor | None,
        z: Tensor | None,
    ) -> tuple[Tensor, Tensor]:
        """Return ``(velocity, acceleration)``, each shaped like ``x_t``."""
        self._check(x_t)
        self._check(dx_t)
        batch = x_t.shape[0]
        scaled = (x_t * (1.0 / self.stats.state_scale)).reshape(batch, self.obs_size)
        features = silu(self.backbone(feature_concat([scaled, self._condition(x_t, t, theta, z)])))
        velocity = self.v_head(features).reshape(batch, *self.obs_shape) * self.stats.step_scale
        rate = (dx_t * (1.0 / self.stats.step_scale)).reshape(batch, self.obs_size)
        accel = self.a_head(feature_concat([features, rate])).reshape(batch, *self.obs_shape) * self.stats.accel_scale
        return velocity, accel
