"""Conditional paths between consecutive trajectory points.

Targets are in normalized time: one trajectory step spans t in [0, 1], so
velocities are state differences rather than physical derivatives. The
conversion of physical-time physics terms happens in :mod:`gbdm.objectives`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError, ValidationError
from gbdm.numkit.tensor import Tensor, as_tensor, reshape
from gbdm.validators import validate_non_negative, validate_unit_interval, validated


if TYPE_CHECKING:
    from gbdm.numkit.random import Rng
    from gbdm.numkit.tensor import Operand


@dataclass(frozen=True)
class BridgeSample:
    """One point on a bridge and its regression targets.

    Attributes:
        t: Normalized time, broadcastable against ``x_t``.
        x_t: Interpolated state.
        dx_t: Target velocity.
        ddx_t: Target acceleration (second-order bridges only).
    """

    t: Tensor
    x_t: Tensor
    dx_t: Tensor
    ddx_t: Tensor | None = None


def broadcast_time(t: Operand, like: Tensor) -> Tensor:
    """Shape a scalar or per-segment time so it broadcasts against ``like``.

    A 1-D ``t`` with one entry per batch row becomes ``(B, 1, ..., 1)``.
    """
    time = as_tensor(t, like=like)
    if time.ndim == 0 or like.ndim <= 1:
        return time
    if time.ndim == 1:
        if time.shape[0] != like.shape[0]:
            raise ShapeError("broadcast_time", (like.shape[0],), time.shape)
        return reshape(time, (like.shape[0],) + (1,) * (like.ndim - 1))
    return time


@validated(validate_unit_interval, "t")
def linear_bridge(  # noqa: PLR0913
    x_k: Operand,
    x_next: Operand,
    t: Operand,
    sigma: float = 0.0,
    rng: Rng | None = None,
    *,
    noise: np.ndarray | None = None,
) -> BridgeSample:
    """Straight path from ``x_k`` to ``x_next``, optionally with Gaussian bridge noise.

    ``x_t = (1 - t) x_k + t x_next + sigma * sqrt(t (1 - t)) * eps`` and the
    target velocity is ``x_next - x_k`` for every t.

    Raises:
        ValidationError: If ``t`` is outside [0, 1], ``sigma`` is negative or
            ``sigma > 0`` without a noise source.
    """
    validate_non_negative(sigma, "sigma")
    start = as_tensor(x_k)
    end = as_tensor(x_next, like=start)
    time = broadcast_time(t, start)
    x_t = start * (1.0 - time) + end * time
    if sigma > 0.0:
        if noise is None:
            if rng is None:
                raise ValidationError(field="rng", value=None, reason="required when sigma > 0")
            noise = rng.normal(x_t.shape)
        tdata = np.broadcast_to(time.data, x_t.shape)
        std = sigma * np.sqrt(np.clip(tdata * (1.0 - tdata), 0.0, None))
        x_t = x_t + as_tensor(std * np.asarray(noise, dtype=x_t.dtype), like=x_t)
    return BridgeSample(t=time, x_t=x_t, dx_t=end - start)


def lagrange_path(x_prev: Operand, x_k: Operand, x_next: Operand, tau: Operand) -> BridgeSample:
    """Quadratic through (-1, x_prev), (0, x_k), (1, x_next), evaluated at any ``tau``."""
    prev = as_tensor(x_prev)
    mid = as_tensor(x_k, like=prev)
    end = as_tensor(x_next, like=prev)
    time = broadcast_time(tau, prev)
    slope = (end - prev) * 0.5
    curvature = end - 2.0 * mid + prev
    x_t = mid + slope * time + curvature * 0.5 * (time * time)
    dx_t = slope + curvature * time
    return BridgeSample(t=time, x_t=x_t, dx_t=dx_t, ddx_t=curvature)


@validated(validate_unit_interval, "t")
def lagrange_bridge(x_prev: Operand, x_k: Operand, x_next: Operand, t: Operand) -> BridgeSample:
    """Second-order bridge on the forward interval [x_k, x_next].

    Nodes sit at normalized times -1, 0 and 1; the sample is taken at
    ``t`` in [0, 1].

    Examples:
        >>> s = lagrange_bridge(1.0, 0.0, 1.0, 0.5)
        >>> float(s.dx_t.item()), float(s.ddx_t.item())
        (1.0, 2.0)
    """
    return lagrange_path(x_prev, x_k, x_next, t)
