"""Benchmark system definitions.

Each :class:`SystemSpec` fixes the stored state layout, the physical step,
trajectory lengths for the train and test splits, the parameter sampling
ranges, which parameters the incomplete physics model exposes as θ, and
the per-system training defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from gbdm.exceptions import ValidationError


@dataclass(frozen=True)
class ParamRange:
    """Closed sampling interval of one physical parameter."""

    low: float
    high: float

    def __post_init__(self) -> None:
        """Reject degenerate ranges."""
        if not self.high > self.low:
            raise ValidationError(field="range", value=(self.low, self.high), reason="must have high > low")

    @property
    def midpoint(self) -> float:
        """Prior mean under moment matching."""
        return 0.5 * (self.low + self.high)

    @property
    def std(self) -> float:
        """Standard deviation of the uniform distribution on the range."""
        return (self.high - self.low) / math.sqrt(12.0)


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to simulate a benchmark and to learn from it.

    Attributes:
        name: System identifier.
        state_shape: Shape of one stored state.
        observed: Indices (along axis 0 of the state) the learner sees; ``None`` for all.
        dt: Physical step in seconds.
        train_len: Points per training trajectory.
        test_len: Points per test trajectory.
        history: Default history size h (windows hold h + 1 points).
        eval_horizon: Forecast steps used for evaluation rollouts.
        param_ranges: Sampling interval of every generating parameter, in storage order.
        theta_names: Parameters exposed to the incomplete physics model.
        order: 1 for first-order physics, 2 for an acceleration model.
        input_signal: Driving signal identifier (RLC only).
        rest_points: Leading points held at the initial state (bimodal toy).
        z_dim: Default latent dimensionality.
        total_steps: Default optimizer step budget.
        substeps: Fixed RK4 substeps per stored step.
        extra: Known constants of the complete equations.
    """

    name: str
    state_shape: tuple[int, ...]
    dt: float
    train_len: int
    test_len: int
    history: int
    eval_horizon: int
    param_ranges: dict[str, ParamRange]
    theta_names: tuple[str, ...]
    observed: tuple[int, ...] | None = None
    order: int = 1
    input_signal: str = "none"
    rest_points: int = 0
    z_dim: int = 4
    total_steps: int = 20_000
    substeps: int = 4
    extra: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Check the invariants tying lengths, history and parameters together."""
        if not self.dt > 0:
            raise ValidationError(field="dt", value=self.dt, reason="must be positive")
        for label, length in (("train_len", self.train_len), ("test_len", self.test_len)):
            if length - 1 < self.history + 1:
                raise ValidationError(field=label, value=length, reason=f"must allow T >= h + 1 with h={self.history}")
        if self.history + 1 + self.eval_horizon > self.test_len:
            raise ValidationError(field="eval_horizon", value=self.eval_horizon, reason="exceeds the test trajectories")
        missing = [n for n in self.theta_names if n not in self.param_ranges]
        if missing:
            raise ValidationError(field="theta_names", value=missing, reason="must name sampled parameters")

    @property
    def param_names(self) -> tuple[str, ...]:
        """All generating parameters, in storage order."""
        return tuple(self.param_ranges)

    @property
    def theta_indices(self) -> tuple[int, ...]:
        """Positions of the θ parameters inside the stored parameter vector."""
        names = self.param_names
        return tuple(names.index(n) for n in self.theta_names)

    @property
    def observed_shape(self) -> tuple[int, ...]:
        """Shape of the states the learner consumes."""
        if self.observed is None:
            return self.state_shape
        return (len(self.observed), *self.state_shape[1:])

    def traj_len(self, split: str) -> int:
        """Trajectory length for ``train`` or ``test``."""
        if split == "train":
            return self.train_len
        if split == "test":
            return self.test_len
        raise ValidationError(field="split", value=split, reason="must be 'train' or 'test'")


RD_GRID = 32
RD_DIFFUSION_U = 1e-3

SYSTEMS: dict[str, SystemSpec] = {
    "rlc": SystemSpec(
        name="rlc",
        state_shape=(2,),
        dt=0.1,
        train_len=200,
        test_len=200,
        history=25,
        eval_horizon=100,
        param_ranges={"L": ParamRange(1.0, 3.0), "C": ParamRange(0.5, 1.5), "R": ParamRange(1.0, 3.0)},
        theta_names=("L", "C"),
        input_signal="step",
    ),
    "pendulum": SystemSpec(
        name="pendulum",
        state_shape=(2,),
        observed=(0,),
        dt=0.1,
        train_len=200,
        test_len=200,
        history=25,
        eval_horizon=100,
        param_ranges={"omega": ParamRange(0.785, 3.14), "xi": ParamRange(0.6, 1.5)},
        theta_names=("omega",),
        order=2,
    ),
    "reaction_diffusion": SystemSpec(
        name="reaction_diffusion",
        state_shape=(2, RD_GRID, RD_GRID),
        dt=0.1,
        train_len=11,
        test_len=50,
        history=5,
        eval_horizon=44,
        param_ranges={"b": ParamRange(3e-3, 7e-3), "k": ParamRange(3e-3, 7e-3)},
        theta_names=("b",),
        z_dim=16,
        total_steps=10_000,
        extra={"a": RD_DIFFUSION_U, "dx": 2.0 / RD_GRID},
    ),
    "lorenz": SystemSpec(
        name="lorenz",
        state_shape=(3,),
        dt=0.0339,
        train_len=60,
        test_len=121,
        history=30,
        eval_horizon=90,
        param_ranges={"sigma": ParamRange(9.5, 10.5), "rho": ParamRange(27.0, 29.0), "beta": ParamRange(2.6, 2.8)},
        theta_names=("sigma", "beta"),
    ),
    "bimodal_toy": SystemSpec(
        name="bimodal_toy",
        state_shape=(1,),
        dt=0.1,
        train_len=23,
        test_len=23,
        history=2,
        eval_horizon=20,
        param_ranges={"drift": ParamRange(-1.0, 1.0)},
        theta_names=("drift",),
        rest_points=3,
        z_dim=2,
        total_steps=3_000,
    ),
}


def get_spec(name: str) -> SystemSpec:
    """Look up a system by identifier.

    Raises:
        ValidationError: For an unknown identifier.
    """
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ValidationError(field="system", value=name, reason=f"must be one of {sorted(SYSTEMS)}") from None
