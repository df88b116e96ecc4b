"""Ground-truth simulators of the complete dynamics.

All integration runs in float64 with the classic fourth-order Runge-Kutta
scheme; datasets store the result as float32.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ShapeError, SimulationError
from gbdm.validators import validate_positive_float, validate_positive_int


if TYPE_CHECKING:
    from collections.abc import Callable

    from gbdm.numkit.random import Rng
    from gbdm.systems.specs import SystemSpec

    RightHandSide = Callable[[float, np.ndarray], np.ndarray]


logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e6


@dataclass(frozen=True)
class Trajectory:
    """A simulated state sequence.

    Attributes:
        states: Array of shape ``(T + 1, *state_shape)``.
        dt: Physical step between stored states.
        system: Identifier of the generating system.
        true_params: Generating parameters (evaluation only).
    """

    states: np.ndarray
    dt: float
    system: str
    true_params: np.ndarray | None = None

    def __len__(self) -> int:
        """Return the number of stored points."""
        return int(self.states.shape[0])


def laplacian(field: np.ndarray, dx: float) -> np.ndarray:
    """5-point Laplacian with periodic boundaries over the last two axes."""
    return (
        np.roll(field, 1, axis=-1)
        + np.roll(field, -1, axis=-1)
        + np.roll(field, 1, axis=-2)
        + np.roll(field, -1, axis=-2)
        - 4.0 * field
    ) / (dx * dx)


def rk4_step(rhs: RightHandSide, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """Advance ``x`` by one classic Runge-Kutta step."""
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = rhs(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(  # noqa: PLR0913
    rhs: RightHandSide,
    x0: np.ndarray,
    dt: float,
    n_steps: int,
    *,
    substeps: int = 1,
    system: str = "ode",
) -> np.ndarray:
    """Integrate ``rhs`` from ``x0`` and return the ``n_steps + 1`` stored states.

    Each stored step of size ``dt`` is covered by ``substeps`` RK4 steps.

    Raises:
        SimulationError: If any component exceeds the blow-up threshold or
            stops being finite; ``step`` is the stored index that failed.
    """
    validate_positive_float(dt, "dt")
    validate_positive_int(substeps, "substeps")
    h = dt / substeps
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty((n_steps + 1, *x.shape), dtype=np.float64)
    out[0] = x
    t = 0.0
    for step in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                x = rk4_step(rhs, t, x, h)
                t += h
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_THRESHOLD:
            raise SimulationError(system, step)
        out[step] = x
    return out


# ----------------------------------------------------------------------
# Complete right-hand sides
# ----------------------------------------------------------------------


def input_voltage(signal: str, t: float) -> float:
    """Known driving voltage of the RLC circuit.

    ``step`` is a unit step at t = 0, ``const:<v>`` holds ``v`` volts and
    anything else (``zero``, ``none``) is an unforced circuit.

    Examples:
        >>> input_voltage("step", 0.0)
        1.0
        >>> input_voltage("const:2", 3.0)
        2.0
    """
    if signal == "step":
        return 1.0 if t >= 0.0 else 0.0
    if signal.startswith("const:"):
        return float(signal.removeprefix("const:"))
    return 0.0


def rlc_rhs(params: np.ndarray, signal: str) -> RightHandSide:
    """Series RLC: dU/dt = I/C, dI/dt = (V - U - R I)/L with state (U, I)."""
    inductance, capacitance, resistance = params

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        u, i = x
        return np.array([i / capacitance, (input_voltage(signal, t) - u - resistance * i) / inductance])

    return rhs


def pendulum_rhs(params: np.ndarray) -> RightHandSide:
    """Damped pendulum with state (x, ẋ): ẍ = -ω² sin x - ξ ẋ."""
    omega, xi = params

    def rhs(_t: float, x: np.ndarray) -> np.ndarray:
        angle, velocity = x
        return np.array([velocity, -(omega**2) * np.sin(angle) - xi * velocity])

    return rhs


def reaction_diffusion_rhs(params: np.ndarray, a: float, dx: float) -> RightHandSide:
    """FitzHugh-Nagumo type system on a periodic grid with state (u, v)."""
    b, k = params

    def rhs(_t: float, x: np.ndarray) -> np.ndarray:
        u, v = x[0], x[1]
        du = a * laplacian(u, dx) + u - u**3 - v - k
        dv = b * laplacian(v, dx) + u - v
        return np.stack([du, dv])

    return rhs


def lorenz_rhs(params: np.ndarray) -> RightHandSide:
    """Lorenz system with state (u, v, w)."""
    sigma, rho, beta = params

    def rhs(_t: float, x: np.ndarray) -> np.ndarray:
        u, v, w = x
        return np.array([sigma * (v - u), u * (rho - w) - v, u * v - beta * w])

    return rhs


def complete_rhs(spec: SystemSpec, params: np.ndarray) -> RightHandSide:
    """Right-hand side of the full equations of ``spec`` at ``params``.

    Raises:
        ShapeError: If ``params`` does not hold one value per generating parameter.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (len(spec.param_names),):
        raise ShapeError("complete_rhs", (len(spec.param_names),), params.shape, details=spec.name)
    if spec.name == "rlc":
        return rlc_rhs(params, spec.input_signal)
    if spec.name == "pendulum":
        return pendulum_rhs(params)
    if spec.name == "reaction_diffusion":
        return reaction_diffusion_rhs(params, spec.extra["a"], spec.extra["dx"])
    if spec.name == "lorenz":
        return lorenz_rhs(params)
    (drift,) = params
    return lambda _t, x: np.full_like(x, drift)


# ----------------------------------------------------------------------
# Sampling and simulation
# ----------------------------------------------------------------------


def sample_params(spec: SystemSpec, rng: Rng) -> np.ndarray:
    """Draw one generating parameter vector.

    The bimodal toy picks its speed from {-1, +1}; every other parameter is
    uniform on its range.
    """
    if spec.name == "bimodal_toy":
        return np.array([rng.choice((-1.0, 1.0))])
    return np.array([rng.uniform64((), r.low, r.high) for r in spec.param_ranges.values()], dtype=np.float64)


def sample_initial_state(spec: SystemSpec, rng: Rng) -> np.ndarray:
    """Draw one initial state from the system's initial distribution."""
    if spec.name == "rlc":
        return np.array([rng.normal64(()), 0.0])
    if spec.name == "pendulum":
        return np.array([rng.uniform64((), -1.57, 1.57), 0.0])
    if spec.name == "reaction_diffusion":
        return rng.uniform64(spec.state_shape)
    if spec.name == "lorenz":
        return 1.0 + rng.normal64(spec.state_shape)
    return np.zeros(spec.state_shape)


def _simulate_toy(spec: SystemSpec, params: np.ndarray, x0: np.ndarray, n_points: int) -> np.ndarray:
    # Piecewise linear: at rest for ``rest_points`` points, then constant speed.
    (drift,) = params
    moving = np.maximum(np.arange(n_points) - (spec.rest_points - 1), 0) * spec.dt
    return x0[None, :] + drift * moving[:, None]


def simulate(
    spec: SystemSpec,
    params: np.ndarray,
    x0: np.ndarray,
    n_points: int | None = None,
    *,
    rng: Rng | None = None,
) -> Trajectory:
    """Integrate the complete equations of ``spec`` from ``x0``.

    Every benchmark system is deterministic once ``params`` and ``x0`` are
    drawn, so the trajectory never reads ``rng``. It is accepted so callers
    can hand over the per-trajectory stream unchanged.

    Args:
        spec: The benchmark system.
        params: Generating parameters in ``spec.param_names`` order.
        x0: Initial state of shape ``spec.state_shape``.
        n_points: Stored points; defaults to the training trajectory length.
        rng: Per-trajectory stream; unused by the deterministic systems.

    Returns:
        The trajectory in float64 with ``true_params`` attached.

    Raises:
        ShapeError: If ``x0`` or ``params`` has the wrong shape.
        SimulationError: On a state blow-up.
    """
    del rng
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != spec.state_shape:
        raise ShapeError("simulate", spec.state_shape, x0.shape, details=spec.name)
    n_points = spec.train_len if n_points is None else validate_positive_int(n_points, "n_points")
    params = np.asarray(params, dtype=np.float64)
    if spec.name == "bimodal_toy":
        if params.shape != (1,):
            raise ShapeError("simulate", (1,), params.shape, details=spec.name)
        states = _simulate_toy(spec, params, x0, n_points)
    else:
        rhs = complete_rhs(spec, params)
        states = integrate(rhs, x0, spec.dt, n_points - 1, substeps=spec.substeps, system=spec.name)
    return Trajectory(states=states, dt=spec.dt, system=spec.name, true_params=params.copy())
