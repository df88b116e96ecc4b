"""Tests for GBDS dataset generation, decoding and views."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from gbdm.exceptions import DatasetFormatError, ValidationError
from gbdm.systems.dataset import (
    MAGIC,
    generate_dataset,
    load_dataset,
    worker_threads,
)
from gbdm.systems.specs import SYSTEMS


if TYPE_CHECKING:
    from pathlib import Path


class TestGenerateDataset:
    """Test cases for dataset generation."""

    @pytest.mark.unit
    def test_regeneration_is_byte_identical(self, tmp_path: Path) -> None:
        """Test that the same seed gives the same file regardless of threads."""
        spec = SYSTEMS["rlc"]
        a = generate_dataset(spec, 4, 7, tmp_path / "a.gbds", threads=1)
        b = generate_dataset(spec, 4, 7, tmp_path / "b.gbds", threads=3)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes()[:4] == MAGIC

    @pytest.mark.unit
    def test_splits_use_different_streams(self, tmp_path: Path) -> None:
        """Test that train and test draw different trajectories."""
        spec = SYSTEMS["rlc"]
        train = load_dataset(generate_dataset(spec, 2, 0, tmp_path / "tr.gbds", split="train"))
        test = load_dataset(generate_dataset(spec, 2, 0, tmp_path / "te.gbds", split="test"))
        tr, te = train.evaluation_view(), test.evaluation_view()
        assert not np.array_equal(tr.params, te.params)

    @pytest.mark.unit
    def test_single_trajectory(self, tmp_path: Path) -> None:
        """Test n = 1."""
        data = load_dataset(generate_dataset(SYSTEMS["lorenz"], 1, 3, tmp_path / "l.gbds", split="test"))
        view = data.evaluation_view()
        assert view.states.shape == (1, 121, 3)
        assert data.header.traj_len == 121
        assert data.header.generator_seed == 3

    @pytest.mark.unit
    def test_pendulum_parameters_in_range(self, tmp_path: Path) -> None:
        """Test stored parameters against the sampling ranges."""
        spec = SYSTEMS["pendulum"]
        view = load_dataset(generate_dataset(spec, 8, 1, tmp_path / "p.gbds")).evaluation_view()
        omega, xi = view.params[:, 0], view.params[:, 1]
        assert np.all((omega >= np.float32(0.785)) & (omega <= np.float32(3.14)))
        assert np.all((xi >= np.float32(0.6)) & (xi <= np.float32(1.5)))

    @pytest.mark.unit
    def test_zero_trajectories_rejected(self, tmp_path: Path) -> None:
        """Test that n_traj must be positive."""
        with pytest.raises(ValidationError):
            generate_dataset(SYSTEMS["rlc"], 0, 0, tmp_path / "x.gbds")

    @pytest.mark.unit
    def test_unknown_split(self, tmp_path: Path) -> None:
        """Test that only train and test are valid splits."""
        with pytest.raises(ValidationError):
            generate_dataset(SYSTEMS["rlc"], 1, 0, tmp_path / "x.gbds", split="valid")


class TestLoadDataset:
    """Test cases for decoding damaged files."""

    @pytest.mark.unit
    def test_truncated_payload(self, rlc_data: tuple[Path, Path]) -> None:
        """Test a file cut short."""
        path = rlc_data[0]
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(DatasetFormatError) as exc_info:
            load_dataset(path)
        assert exc_info.value.reason == "truncated payload"

    @pytest.mark.unit
    def test_trailing_bytes(self, rlc_data: tuple[Path, Path]) -> None:
        """Test a file with extra bytes."""
        path = rlc_data[0]
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(DatasetFormatError, match="trailing"):
            load_dataset(path)

    @pytest.mark.unit
    def test_magic_mismatch(self, tmp_path: Path) -> None:
        """Test a checkpoint passed as a dataset."""
        path = tmp_path / "x.gbds"
        path.write_bytes(b"GBCK" + b"\x01\x00\x00\x00" + b"\x00" * 8)
        with pytest.raises(DatasetFormatError, match="magic"):
            load_dataset(path)

    @pytest.mark.unit
    def test_unsupported_version(self, rlc_data: tuple[Path, Path]) -> None:
        """Test a future format version."""
        path = rlc_data[0]
        raw = bytearray(path.read_bytes())
        raw[4] = 2
        path.write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="unsupported version"):
            load_dataset(path)


class TestViews:
    """Test cases for training and evaluation views."""

    @pytest.mark.unit
    def test_training_view_hides_parameters(self, rlc_data: tuple[Path, Path]) -> None:
        """Test that the training view carries no generating parameters."""
        view = load_dataset(rlc_data[0]).training_view()
        assert not hasattr(view, "params")
        assert not hasattr(view, "theta")
        with pytest.raises(AttributeError):
            view.params = np.zeros(1)  # type: ignore[attr-defined]

    @pytest.mark.unit
    def test_training_view_is_read_only(self, rlc_data: tuple[Path, Path]) -> None:
        """Test that states cannot be modified through the view."""
        view = load_dataset(rlc_data[0]).training_view()
        with pytest.raises(ValueError, match="read-only"):
            view.states[0, 0, 0] = 1.0

    @pytest.mark.unit
    def test_pendulum_observes_angle_only(self, tmp_path: Path) -> None:
        """Test the observed slice against the full stored states."""
        data = load_dataset(generate_dataset(SYSTEMS["pendulum"], 2, 0, tmp_path / "p.gbds"))
        train = data.training_view()
        full = data.evaluation_view()
        assert train.state_shape == (1,)
        assert full.full_states.shape == (2, 200, 2)
        np.testing.assert_array_equal(train.states[..., 0], full.full_states[..., 0])

    @pytest.mark.unit
    def test_theta_columns(self, rlc_data: tuple[Path, Path]) -> None:
        """Test that θ selects L and C."""
        view = load_dataset(rlc_data[0]).evaluation_view()
        np.testing.assert_array_equal(view.theta, view.params[:, :2])

    @pytest.mark.unit
    def test_subset(self, rlc_data: tuple[Path, Path]) -> None:
        """Test the leading-trajectory subset and its clamp."""
        data = load_dataset(rlc_data[0])
        assert data.training_view().subset(2).n_traj == 2
        assert data.training_view().subset(100).n_traj == 4
        assert data.evaluation_view().subset(1).params.shape == (1, 3)


class TestWorkerThreads:
    """Test cases for the worker pool size."""

    @pytest.mark.unit
    def test_reads_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test GBDM_THREADS."""
        monkeypatch.setenv("GBDM_THREADS", "3")
        assert worker_threads() == 3

    @pytest.mark.unit
    @pytest.mark.parametrize("raw", ["", "zero", "-2"])
    def test_falls_back_to_cpu_count(self, monkeypatch: pytest.MonkeyPatch, raw: str) -> None:
        """Test invalid values."""
        monkeypatch.setenv("GBDM_THREADS", raw)
        assert worker_threads() >= 1
