"""Priors over the latents and the physical parameters, plus data scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError, ValidationError


if TYPE_CHECKING:
    from gbdm.systems.specs import SystemSpec


@dataclass(frozen=True)
class PriorSpec:
    """p(z) = N(0, I) and a diagonal Gaussian p(θ).

    Attributes:
        theta_names: Parameter names, in θ order.
        theta_mean: Prior means.
        theta_std: Prior standard deviations (strictly positive).
    """

    theta_names: tuple[str, ...]
    theta_mean: np.ndarray
    theta_std: np.ndarray

    def __post_init__(self) -> None:
        """Check shapes and positivity."""
        p = len(self.theta_names)
        if self.theta_mean.shape != (p,) or self.theta_std.shape != (p,):
            raise ShapeError("PriorSpec", (p,), (self.theta_mean.shape, self.theta_std.shape))
        if np.any(self.theta_std <= 0):
            raise ValidationError(field="theta_std", value=self.theta_std.tolist(), reason="must be strictly positive")

    @classmethod
    def from_spec(cls, spec: SystemSpec) -> PriorSpec:
        """Moment-match a Gaussian to each θ sampling range (midpoint, width / sqrt(12))."""
        ranges = [spec.param_ranges[n] for n in spec.theta_names]
        return cls(
            theta_names=spec.theta_names,
            theta_mean=np.array([r.midpoint for r in ranges]),
            theta_std=np.array([r.std for r in ranges]),
        )

    @property
    def theta_dim(self) -> int:
        """Number of physical parameters."""
        return len(self.theta_names)


def _channel_rms(values: np.ndarray, floor: float) -> np.ndarray:
    # values: (n, T, C, ...) -> RMS per channel C, shaped to broadcast over (C, ...).
    moved = np.moveaxis(np.asarray(values, dtype=np.float64), 2, 0).reshape(values.shape[2], -1)
    rms = np.sqrt(np.mean(moved * moved, axis=1)) if moved.shape[1] else np.ones(values.shape[2])
    return np.maximum(rms, floor).reshape((values.shape[2],) + (1,) * (values.ndim - 3))


@dataclass(frozen=True)
class DataStats:
    """Per-channel scales used to normalize network inputs and outputs.

    Attributes:
        state_scale: RMS of states.
        step_scale: RMS of one-step differences (velocity units).
        accel_scale: RMS of second differences (acceleration units).
    """

    state_scale: np.ndarray
    step_scale: np.ndarray
    accel_scale: np.ndarray

    @classmethod
    def from_states(cls, states: np.ndarray) -> DataStats:
        """Estimate scales from training states of shape ``(n, T, *obs_shape)``."""
        if states.ndim < 3 or states.shape[1] < 3:  # noqa: PLR2004
            raise ShapeError("DataStats", "(n, T >= 3, C, ...)", states.shape)
        first = np.diff(states, axis=1)
        second = np.diff(states, n=2, axis=1)
        return cls(
            state_scale=_channel_rms(states, 1e-3),
            step_scale=_channel_rms(first, 1e-6),
            accel_scale=_channel_rms(second, 1e-8),
        )

    @classmethod
    def identity(cls, obs_shape: tuple[int, ...]) -> DataStats:
        """Unit scales (tests and hand-built models)."""
        one = np.ones((obs_shape[0],) + (1,) * (len(obs_shape) - 1))
        return cls(state_scale=one, step_scale=one.copy(), accel_scale=one.copy())

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Arrays for a checkpoint payload."""
        return {
            "stats.state_scale": self.state_scale,
            "stats.step_scale": self.step_scale,
            "stats.accel_scale": self.accel_scale,
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> DataStats:
        """Inverse of :meth:`to_arrays`."""
        return cls(
            state_scale=np.asarray(arrays["stats.state_scale"], dtype=np.float64),
            step_scale=np.asarray(arrays["stats.step_scale"], dtype=np.float64),
            accel_scale=np.asarray(arrays["stats.accel_scale"], dtype=np.float64),
        )
