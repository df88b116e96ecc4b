"""The grey-box model bundle: encoder, field, physics model and priors."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from gbdm.nets.encoders import HistoryEncoder
from gbdm.nets.fields import ConvField, SecondOrderField, VectorField
from gbdm.nets.module import Module
from gbdm.nets.priors import DataStats, PriorSpec
from gbdm.numkit.random import Rng
from gbdm.systems.physics import PhysicsModel


if TYPE_CHECKING:
    from gbdm.systems.specs import SystemSpec


logger = logging.getLogger(__name__)

_GRID_RANK = 3


class GreyBoxModel(Module):
    """Everything the objectives and rollouts need to evaluate the composed field.

    Attributes:
        encoder: History encoder producing (z, θ).
        field: First-order field, or a two-head field when ``order == 2``.
        physics: Incomplete physics model f_p.
        prior: Priors p(z), p(θ).
        stats: Data scaling used by the networks.
        history: History size h.
    """

    def __init__(  # noqa: PLR0913
        self,
        *,
        encoder: HistoryEncoder,
        field: VectorField | ConvField | SecondOrderField,
        physics: PhysicsModel,
        prior: PriorSpec,
        stats: DataStats,
        history: int,
    ) -> None:
        """Bundle the components."""
        self.encoder = encoder
        self.field = field
        self.physics = physics
        self.prior = prior
        self.stats = stats
        self.history = history

    @property
    def order(self) -> int:
        """1 for first-order fields, 2 for velocity/acceleration heads."""
        return 2 if isinstance(self.field, SecondOrderField) else 1


def build_model(  # noqa: PLR0913
    spec: SystemSpec,
    stats: DataStats,
    *,
    history: int,
    z_dim: int,
    seed: int,
    physics_enabled: bool = True,
    latents_enabled: bool = True,
    target_aware_latent: bool = False,
    input_signal: str | None = None,
) -> GreyBoxModel:
    """Initialize a model for ``spec`` from the ``init`` stream of ``seed``.

    With latents disabled the encoder returns posterior means, which turns
    z into a deterministic history embedding.
    """
    rng = Rng(seed).stream("init")
    prior = PriorSpec.from_spec(spec)
    obs_shape = spec.observed_shape
    encoder = HistoryEncoder(
        obs_shape=obs_shape,
        history=history,
        z_dim=z_dim,
        prior=prior,
        stats=stats,
        rng=rng.stream("encoder"),
        theta_layers=2 if spec.name == "lorenz" else 1,
        target_aware=target_aware_latent and latents_enabled,
        stochastic=latents_enabled,
    )
    field_rng = rng.stream("field")
    field: VectorField | ConvField | SecondOrderField
    if spec.order == 2:  # noqa: PLR2004
        field = SecondOrderField(
            obs_shape=obs_shape, z_dim=z_dim, prior=prior, stats=stats, rng=field_rng, use_theta=physics_enabled,
        )
    elif len(obs_shape) == _GRID_RANK:
        field = ConvField(
            obs_shape=obs_shape, z_dim=z_dim, prior=prior, stats=stats, rng=field_rng, use_theta=physics_enabled,
        )
    else:
        field = VectorField(
            obs_shape=obs_shape, z_dim=z_dim, prior=prior, stats=stats, rng=field_rng, use_theta=physics_enabled,
        )
    model = GreyBoxModel(
        encoder=encoder,
        field=field,
        physics=PhysicsModel.for_spec(spec, input_signal),
        prior=prior,
        stats=stats,
        history=history,
    )
    logger.debug("Built %s model with %d parameters", spec.name, model.num_parameters())
    return model
