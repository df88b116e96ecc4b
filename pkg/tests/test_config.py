"""Tests for run configuration parsing and resolution."""

from __future__ import annotations

from pathlib import Path

import pytest

from gbdm.config import (
    METHOD_FLAGS,
    SAMPLE_EFFICIENCY_SEEDS,
    TrainConfig,
    build_config,
    load_config,
    parse_key_values,
    parse_overrides,
    sample_efficiency_sizes,
)
from gbdm.exceptions import ConfigurationError
from gbdm.objectives import Composition


CFG_DIR = Path(__file__).resolve().parents[1] / "cfg"


def _base(**extra: object) -> dict[str, object]:
    return {"system": "rlc", "train_data": "a.gbds", "test_data": "b.gbds", **extra}


class TestParseKeyValues:
    """Test cases for the flat config format."""

    @pytest.mark.unit
    def test_comments_and_blank_lines(self) -> None:
        """Test that comments and blank lines are skipped."""
        values = parse_key_values(["# header", "", "system = lorenz  # chaotic", "  seed=4  "])
        assert values == {"system": "lorenz", "seed": "4"}

    @pytest.mark.unit
    def test_duplicate_key(self) -> None:
        """Test that a key may appear once."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_key_values(["seed = 1", "seed = 2"], "run.cfg")
        assert exc_info.value.config_key == "seed"

    @pytest.mark.unit
    @pytest.mark.parametrize("line", ["no separator", " = value"])
    def test_malformed_line(self, line: str) -> None:
        """Test lines without a key or an equals sign."""
        with pytest.raises(ConfigurationError):
            parse_key_values([line])

    @pytest.mark.unit
    def test_value_may_contain_equals(self) -> None:
        """Test that only the first equals sign splits."""
        assert parse_key_values(["train_data = a=b.gbds"]) == {"train_data": "a=b.gbds"}


class TestParseOverrides:
    """Test cases for --set arguments."""

    @pytest.mark.unit
    def test_later_override_wins(self) -> None:
        """Test repeated keys."""
        assert parse_overrides(["seed=1", "lr = 0.01", "seed=2"]) == {"seed": "2", "lr": "0.01"}

    @pytest.mark.unit
    def test_missing_equals(self) -> None:
        """Test an override without a value."""
        with pytest.raises(ConfigurationError):
            parse_overrides(["seed"])


class TestBuildConfig:
    """Test cases for validation."""

    @pytest.mark.unit
    def test_strings_are_coerced(self) -> None:
        """Test that file values become typed fields."""
        config = build_config(_base(seed="7", lr="0.01", target_aware_latent="true"))
        assert config.seed == 7
        assert config.lr == pytest.approx(0.01)
        assert config.target_aware_latent is True
        assert config.train_data == Path("a.gbds")

    @pytest.mark.unit
    def test_unknown_key(self) -> None:
        """Test that typos are rejected."""
        with pytest.raises(ConfigurationError) as exc_info:
            build_config(_base(learning_rate="0.1"))
        assert exc_info.value.config_key == "learning_rate"

    @pytest.mark.unit
    @pytest.mark.parametrize(
        ("key", "value"),
        [("system", "double_pendulum"), ("method", "ode"), ("lr", "0"), ("seed", "-1"), ("batch_size", "0")],
    )
    def test_invalid_values(self, key: str, value: str) -> None:
        """Test range and choice checks."""
        with pytest.raises(ConfigurationError) as exc_info:
            build_config(_base(**{key: value}))
        assert exc_info.value.config_key == key

    @pytest.mark.unit
    def test_missing_required_key(self) -> None:
        """Test that the data files are required."""
        with pytest.raises(ConfigurationError):
            build_config({"system": "rlc"})

    @pytest.mark.unit
    def test_frozen(self) -> None:
        """Test that configs are immutable."""
        config = build_config(_base())
        with pytest.raises(ValueError, match="frozen"):
            config.seed = 3  # type: ignore[misc]


class TestResolved:
    """Test cases for defaults and method presets."""

    @pytest.mark.unit
    def test_system_defaults(self) -> None:
        """Test per-system defaults for unset keys."""
        config = build_config(_base(system="lorenz")).resolved()
        assert config.h == 30
        assert config.eval_horizon == 90
        assert config.total_steps == 20_000
        assert config.batch_size == 64

    @pytest.mark.unit
    def test_explicit_values_kept(self) -> None:
        """Test that set keys are not overwritten."""
        config = build_config(_base(h="10", batch_size="8")).resolved()
        assert (config.h, config.batch_size) == (10, 8)

    @pytest.mark.unit
    @pytest.mark.parametrize("method", sorted(METHOD_FLAGS))
    def test_method_flags(self, method: str) -> None:
        """Test physics and latent switches of every preset."""
        config = build_config(_base(method=method)).resolved()
        assert (config.physics_enabled, config.latents_enabled) == METHOD_FLAGS[method]

    @pytest.mark.unit
    def test_flag_override_beats_preset(self) -> None:
        """Test an explicit switch on top of a preset."""
        config = build_config(_base(method="vgbdm", latents_enabled="false")).resolved()
        assert config.physics_enabled is True
        assert config.latents_enabled is False

    @pytest.mark.unit
    def test_second_order_needs_two_points(self) -> None:
        """Test that the pendulum needs h >= 2."""
        with pytest.raises(ConfigurationError) as exc_info:
            build_config(_base(system="pendulum", h="1")).resolved()
        assert exc_info.value.config_key == "h"

    @pytest.mark.unit
    def test_history_longer_than_test_trajectories(self) -> None:
        """Test an h that leaves no forecast target."""
        with pytest.raises(ConfigurationError):
            build_config(_base(system="bimodal_toy", h="22")).resolved()

    @pytest.mark.unit
    def test_loss_config(self) -> None:
        """Test the derived loss settings."""
        config = build_config(_base(method="vbbdm", composition="gate", alpha="0.25")).resolved()
        loss = config.loss_config(0.1)
        assert loss.dt == 0.1
        assert loss.composition is Composition.GATE
        assert loss.alpha == 0.25
        assert loss.physics_enabled is False
        assert loss.latents_enabled is True


class TestLoadConfig:
    """Test cases for reading files."""

    @pytest.mark.unit
    def test_overrides_merge_over_file(self, tmp_path: Path) -> None:
        """Test that --set wins and the merged mapping is returned."""
        path = tmp_path / "run.cfg"
        path.write_text("system = rlc\ntrain_data = a.gbds\ntest_data = b.gbds\nseed = 1\n", encoding="utf-8")
        config, merged = load_config(path, ["seed=5"])
        assert config.seed == 5
        assert merged["seed"] == "5"
        assert merged["system"] == "rlc"

    @pytest.mark.unit
    def test_overrides_only(self) -> None:
        """Test a config built entirely from overrides."""
        config, _ = load_config(None, ["system=lorenz", "train_data=a", "test_data=b"])
        assert isinstance(config, TrainConfig)
        assert config.system == "lorenz"

    @pytest.mark.unit
    @pytest.mark.parametrize("name", ["rlc", "pendulum", "reaction_diffusion", "lorenz", "bimodal_toy"])
    def test_shipped_configs_resolve(self, name: str) -> None:
        """Test every config in cfg/."""
        config, _ = load_config(CFG_DIR / f"{name}.cfg")
        assert config.resolved().system == name


class TestSampleEfficiency:
    """Test cases for the sweep settings."""

    @pytest.mark.unit
    def test_sizes(self) -> None:
        """Test default and reaction-diffusion sizes."""
        assert sample_efficiency_sizes("rlc") == (10, 100, 1000)
        assert sample_efficiency_sizes("reaction_diffusion") == (10, 25, 50)
        assert SAMPLE_EFFICIENCY_SEEDS == (0, 1, 2)
