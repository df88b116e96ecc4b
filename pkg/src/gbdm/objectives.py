"""Training objectives: grey-box matching, analytic KLs and the negative ELBO.

Physics terms are physical-time quantities. They are scaled into
normalized per-step units before composition: by ``dt`` for a state
derivative and by ``dt**2`` for an acceleration, so the pure-physics field
is a one-step Euler predictor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING, Protocol, cast

import numpy as np

from gbdm.exceptions import NumericalError, ShapeError, ValidationError
from gbdm.interpolants import lagrange_bridge, linear_bridge
from gbdm.numkit.tensor import Tensor, as_tensor, zeros
from gbdm.validators import validate_non_negative, validate_positive_float, validate_positive_int


if TYPE_CHECKING:
    from collections.abc import Callable

    from gbdm.interpolants import BridgeSample
    from gbdm.nets.encoders import Encoding
    from gbdm.nets.model import GreyBoxModel
    from gbdm.nets.priors import PriorSpec
    from gbdm.numkit.random import Rng
    from gbdm.numkit.tensor import Operand
    from gbdm.systems.dataset import TrainingView


logger = logging.getLogger(__name__)


class Composition(StrEnum):
    """How the learned field and the physics term are combined."""

    ADDITIVE = "additive"
    GATE = "gate"


class EncoderLike(Protocol):
    """Anything that turns a history window into (z, θ) and their posteriors."""

    def encode(self, history: Tensor, rng: Rng | None = None, *, target_increment: Tensor | None = None) -> Encoding:
        """Encode a batch of history windows."""
        ...


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters.

    Attributes:
        dt: Physical step, used to scale the physics term.
        composition: ``additive`` or ``gate``.
        alpha: Weight of the acceleration term (second order).
        sigma_bridge: Gaussian bridge noise scale.
        beta_theta: Weight of the θ KL.
        beta_z: Weight of the z KL.
        physics_enabled: Include f_p (off for the black-box baselines).
        latents_enabled: Sample latents and add KLs (off for the deterministic baseline).
        posterior_samples: Posterior draws per segment.
        target_aware_latent: Let q(z) see the next increment during training.
    """

    dt: float
    composition: Composition = Composition.ADDITIVE
    alpha: float = 0.5
    sigma_bridge: float = 0.0
    beta_theta: float = 1.0
    beta_z: float = 1.0
    physics_enabled: bool = True
    latents_enabled: bool = True
    posterior_samples: int = 1
    target_aware_latent: bool = False

    def __post_init__(self) -> None:
        """Validate ranges."""
        validate_positive_float(self.dt, "dt")
        validate_non_negative(self.alpha, "alpha")
        validate_non_negative(self.sigma_bridge, "sigma_bridge")
        validate_non_negative(self.beta_theta, "beta_theta")
        validate_non_negative(self.beta_z, "beta_z")
        validate_positive_int(self.posterior_samples, "posterior_samples")
        try:
            object.__setattr__(self, "composition", Composition(self.composition))
        except ValueError:
            raise ValidationError(
                field="composition",
                value=self.composition,
                reason=f"must be one of {[c.value for c in Composition]}",
            ) from None


@dataclass(frozen=True)
class LossBreakdown:
    """The three reported terms and their weighted total (all scalar tensors)."""

    fm: Tensor
    kl_theta: Tensor
    kl_z: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        """Python floats for logging and CSV rows."""
        return {name: getattr(self, name).item() for name in ("fm", "kl_theta", "kl_z", "total")}


@dataclass(frozen=True)
class SegmentBatch:
    """History windows and their next points.

    Attributes:
        history: ``(B, h + 1, *state_shape)``, i.e. x_{k-h..k}.
        target: ``(B, *state_shape)``, i.e. x_{k+1}.
    """

    history: np.ndarray
    target: np.ndarray

    def __post_init__(self) -> None:
        """Check the batch layout."""
        if self.history.ndim < 3 or self.history.shape[0] != self.target.shape[0]:  # noqa: PLR2004
            raise ShapeError("SegmentBatch", "(B, h + 1, ...) and (B, ...)", (self.history.shape, self.target.shape))
        if self.history.shape[2:] != self.target.shape[1:]:
            raise ShapeError("SegmentBatch", self.history.shape[2:], self.target.shape[1:])

    @property
    def size(self) -> int:
        """Number of segments."""
        return int(self.history.shape[0])

    @property
    def previous(self) -> np.ndarray:
        """x_{k-1}, the extra node of the second-order bridge."""
        return self.history[:, -2]


def segment_batch(
    view: TrainingView,
    h: int,
    batch_size: int,
    rng: Rng,
    *,
    second_order: bool = False,
) -> SegmentBatch:
    """Draw ``batch_size`` segments (x_{k-h..k}, x_{k+1}) from ``view``.

    The trajectory index is uniform over the view and k is uniform over
    ``{h, ..., T - 2}`` for trajectories of T points. Segments are copies.

    Raises:
        ShapeError: If trajectories hold fewer than ``h + 2`` points, or
            ``second_order`` is set and ``h < 1``.
    """
    validate_positive_int(batch_size, "batch_size")
    n_points = view.traj_len
    if h < 0 or n_points < h + 2:
        raise ShapeError("segment_batch", f"trajectories of at least h + 2 = {h + 2} points", n_points)
    if second_order and h < 1:
        raise ShapeError("segment_batch", "h >= 1 for second-order segments", h)
    traj = rng.stream("trajectory").integers(0, view.n_traj, batch_size)
    k = rng.stream("index").integers(h, n_points - 1, batch_size)
    offsets = np.arange(-h, 1)
    history = view.states[traj[:, None], k[:, None] + offsets[None, :]]
    target = view.states[traj, k + 1]
    return SegmentBatch(history=np.array(history, dtype=np.float32), target=np.array(target, dtype=np.float32))


# ----------------------------------------------------------------------
# Building blocks
# ----------------------------------------------------------------------


def compose(v: Tensor, f_p: Tensor | None, cfg: LossConfig, *, order: int = 1) -> Tensor:
    """Combine the learned output with the physics term in normalized units.

    Additive: ``v + dt**order * f_p``. Gate: ``dt**order * f_p * (1 + v)``.
    With physics disabled the learned output passes through unchanged.

    Raises:
        ShapeError: If both terms are given with different shapes.
    """
    if not cfg.physics_enabled or f_p is None:
        return v
    if v.shape != f_p.shape:
        raise ShapeError("compose", v.shape, f_p.shape)
    physics = f_p * (cfg.dt**order)
    if cfg.composition is Composition.GATE:
        return physics * (v + 1.0)
    return v + physics


def kl_diag_gaussian(mu: Operand, sigma: Operand, mu0: Operand, sigma0: Operand) -> Tensor:
    """KL[N(mu, sigma^2) || N(mu0, sigma0^2)] summed over every element.

    Raises:
        ValidationError: If any standard deviation is not strictly positive.

    Examples:
        >>> kl_diag_gaussian(1.0, 1.0, 0.0, 1.0).item()
        0.5
    """
    m = as_tensor(mu)
    s = as_tensor(sigma, like=m)
    m0 = as_tensor(mu0, like=m)
    s0 = as_tensor(sigma0, like=m)
    for name, value in (("sigma", s), ("sigma0", s0)):
        if np.any(value.data <= 0):
            raise ValidationError(field=name, value=float(value.data.min()), reason="must be strictly positive")
    var0 = s0 * s0
    terms = s0.log() - s.log() + (s * s + (m - m0) * (m - m0)) / (var0 * 2.0) - 0.5
    return terms.sum()


def _term(name: str, fn: Callable[[], Tensor]) -> Tensor:
    # Re-raise non-finite values with the loss term as provenance.
    try:
        value = fn()
    except NumericalError as e:
        raise NumericalError(name, "loss", details=str(e)) from e
    if not np.isfinite(value.data).all():
        raise NumericalError(name, "loss")
    return value


def _kl_terms(enc: Encoding, prior: PriorSpec, cfg: LossConfig, batch: int) -> tuple[Tensor, Tensor]:
    zero = zeros(())
    if not cfg.latents_enabled:
        return zero, zero
    q_z, q_theta = enc.posterior.q_z, enc.posterior.q_theta
    kl_z = _term("kl_z", lambda: kl_diag_gaussian(q_z.mu, q_z.sigma, 0.0, 1.0) * (1.0 / batch))
    if not cfg.physics_enabled:
        return zero, kl_z
    kl_theta = _term(
        "kl_theta",
        lambda: kl_diag_gaussian(q_theta.mu, q_theta.sigma, prior.theta_mean, prior.theta_std) * (1.0 / batch),
    )
    return kl_theta, kl_z


def _segment_times(rng: Rng, batch: int, t: Operand | None) -> Operand:
    if t is not None:
        return t
    return rng.stream("t").uniform((batch,))


def _encode(encoder: EncoderLike, segments: SegmentBatch, rng: Rng, cfg: LossConfig, history: Tensor) -> Encoding:
    increment = None
    if cfg.target_aware_latent:
        increment = as_tensor(segments.target - segments.history[:, -1], like=history)
    return encoder.encode(history, rng.stream("latent"), target_increment=increment)


def _finish(
    fm_parts: list[Tensor],
    kl_theta_parts: list[Tensor],
    kl_z_parts: list[Tensor],
    cfg: LossConfig,
) -> LossBreakdown:
    scale = 1.0 / len(fm_parts)
    fm = _mean(fm_parts, scale)
    kl_theta = _mean(kl_theta_parts, scale)
    kl_z = _mean(kl_z_parts, scale)
    total = _term("total", lambda: fm + kl_theta * cfg.beta_theta + kl_z * cfg.beta_z)
    return LossBreakdown(fm=fm, kl_theta=kl_theta, kl_z=kl_z, total=total)


def _mean(parts: list[Tensor], scale: float) -> Tensor:
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return acc * scale if len(parts) > 1 else acc


# ----------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------


def vgbdm_loss(  # noqa: PLR0913
    segments: SegmentBatch,
    encoder: EncoderLike,
    field: Callable[[Tensor, Tensor, Tensor | None, Tensor | None], Tensor],
    physics: Callable[[Tensor, Tensor], Tensor],
    prior: PriorSpec,
    cfg: LossConfig,
    rng: Rng,
    *,
    t: Operand | None = None,
) -> LossBreakdown:
    """Negative ELBO of first-order grey-box dynamics matching.

    Per segment: draw t ~ U(0, 1), build the linear bridge between x_k and
    x_{k+1}, encode the history, draw z then θ | z, compose the field with
    the scaled physics term at (x_t, t, θ, z) and regress it onto the bridge
    velocity. KLs use the same z draw. All terms are batch means.

    Args:
        segments: The batch.
        encoder: Produces the posterior pair and samples.
        field: ``field(x_t, t, theta, z)``.
        physics: ``physics(x, theta)``, in physical time.
        prior: p(θ) (p(z) is standard normal).
        cfg: Loss configuration.
        rng: Stream for t, bridge noise and latent draws.
        t: Fixed normalized times (tests); drawn from ``rng`` when omitted.

    Raises:
        NumericalError: If any term is not finite; ``operation`` names the term.
    """
    history = as_tensor(segments.history)
    x_k = segments.history[:, -1]
    batch = segments.size
    fm_parts, klt_parts, klz_parts = [], [], []
    for s in range(cfg.posterior_samples):
        srng = rng.spawn(s)
        bridge: BridgeSample = linear_bridge(
            x_k,
            segments.target,
            _segment_times(srng, batch, t),
            cfg.sigma_bridge,
            srng.stream("bridge"),
        )
        enc = _encode(encoder, segments, srng, cfg, history)
        theta = enc.theta if cfg.physics_enabled else None

        def matching(bridge: BridgeSample = bridge, enc: Encoding = enc, theta: Tensor | None = theta) -> Tensor:
            v = field(bridge.x_t, bridge.t, theta, enc.z)
            f_p = physics(bridge.x_t, enc.theta) if cfg.physics_enabled else None
            residual = compose(v, f_p, cfg) - bridge.dx_t
            return (residual * residual).sum() * (1.0 / batch)

        fm_parts.append(_term("fm", matching))
        kl_theta, kl_z = _kl_terms(enc, prior, cfg, batch)
        klt_parts.append(kl_theta)
        klz_parts.append(kl_z)
    return _finish(fm_parts, klt_parts, klz_parts, cfg)


def second_order_loss(  # noqa: PLR0913
    segments: SegmentBatch,
    encoder: EncoderLike,
    field: Callable[[Tensor, Tensor, Tensor, Tensor | None, Tensor | None], tuple[Tensor, Tensor]],
    physics: Callable[[Tensor, Tensor], Tensor],
    prior: PriorSpec,
    cfg: LossConfig,
    rng: Rng,
    *,
    t: Operand | None = None,
) -> LossBreakdown:
    """Negative ELBO of second-order matching on (x_{k-1}, x_k, x_{k+1}).

    The matching term is ``|v - dx_t|^2 + alpha * |a o f_p - ddx_t|^2`` with
    targets from the Lagrange bridge and the physics acceleration scaled by
    ``dt**2``.

    Raises:
        ShapeError: If the history holds fewer than two points.
        NumericalError: If any term is not finite.
    """
    if segments.history.shape[1] < 2:  # noqa: PLR2004
        raise ShapeError("second_order_loss", "history of at least 2 points", segments.history.shape)
    history = as_tensor(segments.history)
    x_prev = segments.history[:, -2]
    x_k = segments.history[:, -1]
    batch = segments.size
    fm_parts, klt_parts, klz_parts = [], [], []
    for s in range(cfg.posterior_samples):
        srng = rng.spawn(s)
        bridge: BridgeSample = lagrange_bridge(x_prev, x_k, segments.target, _segment_times(srng, batch, t))
        enc = _encode(encoder, segments, srng, cfg, history)
        theta = enc.theta if cfg.physics_enabled else None

        def matching(bridge: BridgeSample = bridge, enc: Encoding = enc, theta: Tensor | None = theta) -> Tensor:
            v, a = field(bridge.x_t, bridge.dx_t, bridge.t, theta, enc.z)
            f_p = physics(bridge.x_t, enc.theta) if cfg.physics_enabled else None
            dv = v - bridge.dx_t
            da = compose(a, f_p, cfg, order=2) - cast("Tensor", bridge.ddx_t)
            return ((dv * dv).sum() + (da * da).sum() * cfg.alpha) * (1.0 / batch)

        fm_parts.append(_term("fm", matching))
        kl_theta, kl_z = _kl_terms(enc, prior, cfg, batch)
        klt_parts.append(kl_theta)
        klz_parts.append(kl_z)
    return _finish(fm_parts, klt_parts, klz_parts, cfg)


def model_loss(model: GreyBoxModel, segments: SegmentBatch, cfg: LossConfig, rng: Rng) -> LossBreakdown:
    """Dispatch to the first- or second-order objective of ``model``."""
    parts = (model.encoder, model.field, model.physics, model.prior)
    if model.order == 2:  # noqa: PLR2004
        return second_order_loss(segments, *parts, cfg, rng)  # type: ignore[arg-type]
    return vgbdm_loss(segments, *parts, cfg, rng)  # type: ignore[arg-type]
