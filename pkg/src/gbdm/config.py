"""Run configuration: flat ``key = value`` files validated by pydantic.

A config only needs ``system``, ``train_data`` and ``test_data``; every
other key falls back to a global default or to the per-system default in
:data:`SYSTEM_DEFAULTS`. ``--set key=value`` overrides are merged over the
file before validation.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator

from gbdm.exceptions import ConfigurationError
from gbdm.objectives import LossConfig
from gbdm.systems.specs import SYSTEMS


if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping


logger = logging.getLogger(__name__)

Method = Literal["vgbdm", "vbbdm", "tfm"]

#: (physics_enabled, latents_enabled) per method preset.
METHOD_FLAGS: dict[str, tuple[bool, bool]] = {
    "vgbdm": (True, True),
    "vbbdm": (False, True),
    "tfm": (False, False),
}

SYSTEM_DEFAULTS: dict[str, dict[str, int]] = {
    name: {
        "h": spec.history,
        "total_steps": spec.total_steps,
        "z_dim": spec.z_dim,
        "batch_size": 64,
        "eval_horizon": spec.eval_horizon,
    }
    for name, spec in SYSTEMS.items()
}

SAMPLE_EFFICIENCY_SIZES: dict[str, tuple[int, ...]] = {"reaction_diffusion": (10, 25, 50)}
SAMPLE_EFFICIENCY_DEFAULT_SIZES = (10, 100, 1000)
SAMPLE_EFFICIENCY_SEEDS = (0, 1, 2)


class TrainConfig(BaseModel):
    """Validated training and evaluation settings.

    Keys left as ``None`` are filled by :meth:`resolved` from the method
    preset and the system defaults.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    system: str = Field(..., description="Benchmark system identifier")
    train_data: Path = Field(..., description="GBDS training file")
    test_data: Path = Field(..., description="GBDS test file")
    method: Method = Field("vgbdm", description="vgbdm | vbbdm | tfm")
    seed: int = Field(0, ge=0, lt=2**64)

    h: int | None = Field(None, ge=1, description="History size")
    batch_size: int | None = Field(None, ge=1)
    total_steps: int | None = Field(None, ge=0)
    z_dim: int | None = Field(None, ge=1)
    n_train: int | None = Field(None, ge=1, description="Use only the first n training trajectories")

    lr: float = Field(1e-3, gt=0)
    lr_min: float = Field(0.0, ge=0)
    weight_decay: float = Field(5e-7, ge=0)
    grad_clip: float = Field(10.0, gt=0)

    composition: Literal["additive", "gate"] = "additive"
    alpha: float = Field(0.5, ge=0)
    sigma_bridge: float = Field(0.0, ge=0)
    beta_theta: float = Field(1.0, ge=0)
    beta_z: float = Field(1.0, ge=0)
    physics_enabled: bool | None = None
    latents_enabled: bool | None = None
    posterior_samples: int = Field(1, ge=1)
    target_aware_latent: bool = False

    eval_every: int = Field(500, ge=1)
    eval_trajectories: int = Field(32, ge=1)
    eval_horizon: int | None = Field(None, ge=1)
    euler_substeps: int = Field(10, ge=1)
    latent_mode: Literal["per-window", "fixed"] = "per-window"
    realizations: int = Field(1, ge=1, description="Forecast realizations per test trajectory")

    @field_validator("system")
    @classmethod
    def _known_system(cls, value: str) -> str:
        if value not in SYSTEMS:
            msg = f"must be one of {sorted(SYSTEMS)}"
            raise ValueError(msg)
        return value

    def resolved(self) -> TrainConfig:
        """Fill unset keys from the method preset and :data:`SYSTEM_DEFAULTS`.

        Raises:
            ConfigurationError: If the resolved history is too short for the system.
        """
        physics, latents = METHOD_FLAGS[self.method]
        defaults = SYSTEM_DEFAULTS[self.system]
        update: dict[str, Any] = {
            "physics_enabled": physics if self.physics_enabled is None else self.physics_enabled,
            "latents_enabled": latents if self.latents_enabled is None else self.latents_enabled,
        }
        for key, value in defaults.items():
            if getattr(self, key) is None:
                update[key] = value
        out = self.model_copy(update=update)
        spec = SYSTEMS[self.system]
        history = out.h if out.h is not None else spec.history
        min_h = 2 if spec.order == 2 else 1  # noqa: PLR2004
        if history < min_h:
            raise ConfigurationError("h", f"at least {min_h} for {self.system}")
        if spec.test_len < history + 2:
            raise ConfigurationError("h", f"at most {spec.test_len - 2} for {self.system} test trajectories")
        return out

    def loss_config(self, dt: float) -> LossConfig:
        """Loss settings for a dataset with step ``dt`` (call on a resolved config)."""
        return LossConfig(
            dt=dt,
            composition=self.composition,  # type: ignore[arg-type]
            alpha=self.alpha,
            sigma_bridge=self.sigma_bridge,
            beta_theta=self.beta_theta,
            beta_z=self.beta_z,
            physics_enabled=bool(self.physics_enabled),
            latents_enabled=bool(self.latents_enabled),
            posterior_samples=self.posterior_samples,
            target_aware_latent=self.target_aware_latent,
        )


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------


def parse_key_values(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigurationError: For a line without ``=``, an empty key or a duplicate key.

    Examples:
        >>> parse_key_values(["system = rlc  # circuit", "", "seed=3"])
        {'system': 'rlc', 'seed': '3'}
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}", "a 'key = value' line", details=raw.rstrip())
        if key in values:
            raise ConfigurationError(key, "each key at most once", details=f"{source}:{lineno}")
        values[key] = value.strip()
    return values


def parse_overrides(overrides: Iterable[str]) -> dict[str, str]:
    """Parse ``--set key=value`` arguments (later ones win)."""
    values: dict[str, str] = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(item, "key=value")
        values[key.strip()] = value.strip()
    return values


def build_config(values: Mapping[str, Any]) -> TrainConfig:
    """Validate a merged mapping into a :class:`TrainConfig`.

    Raises:
        ConfigurationError: For unknown keys or invalid values.
    """
    try:
        return TrainConfig.model_validate(dict(values))
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "<config>"
        raise ConfigurationError(key, first["msg"], details=f"{e.error_count()} error(s)") from None


def load_config(path: Path | str | None, overrides: Iterable[str] = ()) -> tuple[TrainConfig, dict[str, str]]:
    """Read ``path``, merge ``overrides`` and validate.

    Returns:
        The validated config and the merged raw mapping (recorded in ``run.json``).
    """
    merged: dict[str, str] = {}
    if path is not None:
        source = Path(path)
        merged.update(parse_key_values(source.read_text(encoding="utf-8").splitlines(), str(source)))
    merged.update(parse_overrides(overrides))
    config = build_config(merged)
    logger.debug("Loaded config with %d keys", len(merged))
    return config, merged


def sample_efficiency_sizes(system: str) -> tuple[int, ...]:
    """Training-set sizes of the sample-efficiency sweep for ``system``."""
    return SAMPLE_EFFICIENCY_SIZES.get(system, SAMPLE_EFFICIENCY_DEFAULT_SIZES)
