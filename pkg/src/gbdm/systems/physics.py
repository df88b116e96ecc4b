"""Incomplete physics models f_p exposed to the learner.

Each model evaluates on batched tensors through the autodiff kernel, so the
loss can differentiate through f_p with respect to both the state and θ.
Outputs are physical-time derivatives (first order) or accelerations
(second order) with the same shape as the observed state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from gbdm.exceptions import ShapeError
from gbdm.numkit.tensor import concat, roll, stack
from gbdm.systems.simulators import input_voltage


if TYPE_CHECKING:
    from gbdm.numkit.tensor import Tensor
    from gbdm.systems.specs import SystemSpec


def _laplacian(field: Tensor, dx: float) -> Tensor:
    neighbours = roll(field, 1, -1) + roll(field, -1, -1) + roll(field, 1, -2) + roll(field, -1, -2)
    return (neighbours - 4.0 * field) * (1.0 / (dx * dx))


@dataclass(frozen=True)
class PhysicsModel:
    """The known-but-incomplete part of a system's dynamics.

    Attributes:
        system: System identifier.
        order: 1 for a state derivative, 2 for an acceleration.
        theta_names: Names of the parameters the model consumes.
        state_shape: Shape of one observed state.
        input_signal: Driving signal identifier (RLC only).
        constants: Known constants of the equations (RD diffusion, grid step).
    """

    system: str
    order: int
    theta_names: tuple[str, ...]
    state_shape: tuple[int, ...]
    input_signal: str = "none"
    constants: tuple[tuple[str, float], ...] = ()

    @classmethod
    def for_spec(cls, spec: SystemSpec, input_signal: str | None = None) -> PhysicsModel:
        """Build the model of ``spec``; ``input_signal`` overrides the spec's (dataset header value)."""
        return cls(
            system=spec.name,
            order=spec.order,
            theta_names=spec.theta_names,
            state_shape=spec.observed_shape,
            input_signal=spec.input_signal if input_signal is None else input_signal,
            constants=tuple(sorted(spec.extra.items())),
        )

    @property
    def theta_dim(self) -> int:
        """Number of physical parameters."""
        return len(self.theta_names)

    def __call__(self, x: Tensor, theta: Tensor) -> Tensor:
        """Evaluate f_p(x, θ); see :func:`physics_rhs`."""
        return physics_rhs(self, x, theta)


def physics_rhs(model: PhysicsModel, x: Tensor, theta: Tensor) -> Tensor:
    """Evaluate the incomplete physics on a batch.

    Args:
        model: The physics model.
        x: Observed states of shape ``(B, *state_shape)``.
        theta: Parameters of shape ``(B, theta_dim)``.

    Returns:
        A tensor shaped like ``x``.

    Raises:
        ShapeError: If ``x`` or ``theta`` does not match the model.
    """
    if x.ndim != len(model.state_shape) + 1 or x.shape[1:] != model.state_shape:
        raise ShapeError("physics_rhs", ("B", *model.state_shape), x.shape, details=model.system)
    if theta.shape != (x.shape[0], model.theta_dim):
        raise ShapeError("physics_rhs", (x.shape[0], model.theta_dim), theta.shape, details=model.system)

    if model.system == "rlc":
        u, i = x[:, 0:1], x[:, 1:2]
        inductance, capacitance = theta[:, 0:1], theta[:, 1:2]
        voltage = input_voltage(model.input_signal, 0.0)
        return concat([i / capacitance, (voltage - u) / inductance], axis=1)

    if model.system == "pendulum":
        omega = theta[:, 0:1]
        return -(omega * omega) * x.sin()

    if model.system == "lorenz":
        u, v, w = x[:, 0:1], x[:, 1:2], x[:, 2:3]
        sigma, beta = theta[:, 0:1], theta[:, 1:2]
        return concat([sigma * (v - u), -v, u * v - beta * w], axis=1)

    if model.system == "reaction_diffusion":
        consts = dict(model.constants)
        u, v = x[:, 0], x[:, 1]
        b = theta[:, 0:1].reshape(x.shape[0], 1, 1)
        du = _laplacian(u, consts["dx"]) * consts["a"] + u - u * u * u - v
        dv = b * _laplacian(v, consts["dx"]) + u - v
        return stack([du, dv], axis=1)

    # bimodal toy: the whole field is unknown apart from a constant drift.
    return theta + x * 0.0
