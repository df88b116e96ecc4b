"""History encoders producing the structured posterior q(z | history) q(θ | history, z)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError
from gbdm.nets.layers import GRU, MLP, Conv2d, Linear, feature_concat
from gbdm.nets.module import Module
from gbdm.numkit.random import gaussian_sample
from gbdm.numkit.tensor import as_tensor, concat, silu, zeros
from gbdm.validators import validate_positive_int


if TYPE_CHECKING:
    from gbdm.nets.priors import DataStats, PriorSpec
    from gbdm.numkit.random import Rng
    from gbdm.numkit.tensor import Tensor


SIGMA_FLOOR = 1e-5
_GRID_RANK = 3


@dataclass(frozen=True)
class Gaussian:
    """Diagonal Gaussian with batched mean and standard deviation."""

    mu: Tensor
    sigma: Tensor


@dataclass(frozen=True)
class PosteriorPair:
    """q(z | history) and q(θ | history, z)."""

    q_z: Gaussian
    q_theta: Gaussian


@dataclass(frozen=True)
class Encoding:
    """A posterior pair together with the (z, θ) drawn from it."""

    posterior: PosteriorPair
    z: Tensor
    theta: Tensor


class ConvBackbone(Module):
    """Four stride-2 convolutions over the channel-stacked history, then a dense summary."""

    def __init__(self, c_in: int, grid: tuple[int, int], hidden: int, rng: Rng) -> None:
        """Build channels 16-32-32-64 for an input grid of size ``grid``."""
        channels = (c_in, 16, 32, 32, 64)
        self.convs = [
            Conv2d(channels[i], channels[i + 1], 3, rng.spawn(i), stride=2, padding=1) for i in range(4)
        ]
        h, w = grid
        for _ in range(4):
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        self.flat = channels[-1] * h * w
        self.proj = Linear(self.flat, hidden, rng.spawn(4))

    def __call__(self, x: Tensor) -> Tensor:
        """Summarize ``(B, c_in, H, W)`` maps into ``(B, hidden)``."""
        for conv in self.convs:
            x = silu(conv(x))
        return silu(self.proj(x.reshape(x.shape[0], self.flat)))


class HistoryEncoder(Module):
    """Sequence-aware encoder of a history window ``x_{k-h..k}``.

    ODE systems run a GRU over per-step features (scaled state and scaled
    increment); gridded systems stack the window along channels and run a
    convolutional backbone. The z-head reads the summary (and, when
    ``target_aware`` is set, the next increment); the θ-head reads the
    summary concatenated with the sampled z and is parameterized around the
    physics prior.
    """

    def __init__(  # noqa: PLR0913
        self,
        *,
        obs_shape: tuple[int, ...],
        history: int,
        z_dim: int,
        prior: PriorSpec,
        stats: DataStats,
        rng: Rng,
        hidden: int = 64,
        theta_layers: int = 1,
        target_aware: bool = False,
        stochastic: bool = True,
    ) -> None:
        """Create the backbone and both posterior heads.

        The z-head is linear. The θ-head is linear for ``theta_layers=1`` and
        gains one hidden layer of width ``hidden`` for ``theta_layers=2``.
        """
        self.obs_shape = tuple(obs_shape)
        self.window = history + 1
        self.z_dim = z_dim
        self.prior = prior
        self.stats = stats
        self.target_aware = target_aware
        self.stochastic = stochastic
        obs_size = int(np.prod(self.obs_shape))
        if len(self.obs_shape) == _GRID_RANK:
            c_in = 2 * self.window * self.obs_shape[0]
            self.backbone: Module = ConvBackbone(c_in, self.obs_shape[1:], hidden, rng.stream("backbone"))
        else:
            self.backbone = GRU(2 * obs_size, hidden, rng.stream("backbone"))
        z_in = hidden + (obs_size if target_aware else 0)
        self.z_head = Linear(z_in, 2 * z_dim, rng.stream("z_head"))
        validate_positive_int(theta_layers, "theta_layers")
        theta_sizes = [hidden + z_dim, *([hidden] * (theta_layers - 1)), 2 * prior.theta_dim]
        self.theta_head: Linear | MLP
        if theta_layers == 1:
            self.theta_head = Linear(theta_sizes[0], theta_sizes[-1], rng.stream("theta_head"))
        else:
            self.theta_head = MLP(theta_sizes, rng.stream("theta_head"))

    # ------------------------------------------------------------------

    def _features(self, history: Tensor) -> Tensor:
        scaled = history * (1.0 / self.stats.state_scale)
        steps = (history[:, 1:] - history[:, :-1]) * (1.0 / self.stats.step_scale)
        steps = concat([zeros((history.shape[0], 1, *self.obs_shape)), steps], axis=1)
        return concat([scaled, steps], axis=2)

    def summarize(self, history: Tensor) -> Tensor:
        """History summary ``(B, hidden)``.

        Raises:
            ShapeError: If the window length or state shape is wrong.
        """
        if history.ndim != 2 + len(self.obs_shape) or history.shape[1:] != (self.window, *self.obs_shape):
            raise ShapeError("encode", ("B", self.window, *self.obs_shape), history.shape)
        feats = self._features(history)
        batch = history.shape[0]
        if isinstance(self.backbone, ConvBackbone):
            stacked = feats.reshape(batch, -1, *self.obs_shape[1:])
            return self.backbone(stacked)
        return self.backbone(feats.reshape(batch, self.window, -1))

    def posterior_z(self, summary: Tensor, target_increment: Tensor | None = None) -> Gaussian:
        """Parameters of q(z | history[, next increment])."""
        inputs = summary
        if self.target_aware:
            if target_increment is None:
                raise ShapeError("posterior_z", "a target increment", None)
            flat = (target_increment * (1.0 / self.stats.step_scale)).reshape(summary.shape[0], -1)
            inputs = feature_concat([summary, flat])
        raw = self.z_head(inputs)
        return Gaussian(mu=raw[:, : self.z_dim], sigma=raw[:, self.z_dim :].softplus() + SIGMA_FLOOR)

    def posterior_theta(self, summary: Tensor, z: Tensor) -> Gaussian:
        """Parameters of q(θ | history, z), centred on the physics prior."""
        p = self.prior.theta_dim
        raw = self.theta_head(feature_concat([summary, z]))
        mean = as_tensor(self.prior.theta_mean, like=raw)
        std = as_tensor(self.prior.theta_std, like=raw)
        return Gaussian(mu=mean + std * raw[:, :p], sigma=std * raw[:, p:].softplus() + SIGMA_FLOOR)

    def encode(  # noqa: PLR0913
        self,
        history: Tensor,
        rng: Rng | None = None,
        *,
        target_increment: Tensor | None = None,
        noise_z: np.ndarray | None = None,
        noise_theta: np.ndarray | None = None,
    ) -> Encoding:
        """Encode ``history`` and draw z, then θ | z.

        Without a target increment a target-aware encoder draws z from p(z)
        (rollouts). A non-stochastic encoder returns the posterior means.
        """
        summary = self.summarize(history)
        batch = history.shape[0]
        if self.target_aware and target_increment is None:
            mu = zeros((batch, self.z_dim))
            q_z = Gaussian(mu=mu, sigma=mu + 1.0)
        else:
            q_z = self.posterior_z(summary, target_increment)
        if self.stochastic:
            z = gaussian_sample(q_z.mu, q_z.sigma, None if rng is None else rng.stream("z"), noise=noise_z)
        else:
            z = q_z.mu
        q_theta = self.posterior_theta(summary, z)
        if self.stochastic:
            theta = gaussian_sample(
                q_theta.mu,
                q_theta.sigma,
                None if rng is None else rng.stream("theta"),
                noise=noise_theta,
            )
        else:
            theta = q_theta.mu
        return Encoding(posterior=PosteriorPair(q_z=q_z, q_theta=q_theta), z=z, theta=theta)
