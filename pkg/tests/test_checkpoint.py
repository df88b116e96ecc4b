"""Tests for GBCK checkpoint files."""

from __future__ import annotations

import json
import struct
from typing import TYPE_CHECKING

import numpy as np
import pytest

from gbdm.exceptions import CheckpointError
from gbdm.numkit.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint


if TYPE_CHECKING:
    from pathlib import Path


@pytest.fixture
def arrays() -> dict[str, np.ndarray]:
    """A few named float32 arrays."""
    return {
        "model.w": np.arange(6, dtype=np.float32).reshape(2, 3),
        "model.b": np.array([0.5, -0.25], dtype=np.float32),
        "scalar": np.array(3.0, dtype=np.float32),
    }


class TestRoundTrip:
    """Test cases for save then load."""

    @pytest.mark.unit
    def test_arrays_and_header_survive(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test bit-identical arrays and the caller header."""
        path = save_checkpoint(tmp_path / "c.gbck", arrays, {"step": 42, "config": {"lr": 1e-3}})
        ckpt = load_checkpoint(path)
        assert ckpt.step == 42
        assert ckpt.header["config"] == {"lr": 1e-3}
        assert list(ckpt.arrays) == list(arrays)
        for name, value in arrays.items():
            np.testing.assert_array_equal(ckpt.arrays[name], value)
            assert ckpt.arrays[name].dtype == np.float32

    @pytest.mark.unit
    def test_same_input_same_bytes(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test that writes are deterministic."""
        a = save_checkpoint(tmp_path / "a.gbck", arrays, {"step": 1})
        b = save_checkpoint(tmp_path / "b.gbck", arrays, {"step": 1})
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.unit
    def test_starts_with_magic_and_leaves_no_tmp(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test the file prefix and the atomic write."""
        path = save_checkpoint(tmp_path / "sub" / "c.gbck", arrays, {})
        assert path.read_bytes()[:4] == MAGIC
        assert [p.name for p in path.parent.iterdir()] == ["c.gbck"]

    @pytest.mark.unit
    def test_missing_step_defaults_to_zero(self, tmp_path: Path) -> None:
        """Test the step property without a step key."""
        path = save_checkpoint(tmp_path / "c.gbck", {}, {})
        assert load_checkpoint(path).step == 0


class TestCorruption:
    """Test cases for damaged or foreign files."""

    @pytest.mark.unit
    def test_reserved_header_keys(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test that names and shapes cannot be set by callers."""
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path / "c.gbck", arrays, {"names": []})

    @pytest.mark.unit
    def test_truncated_payload(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test that a cut file reports a truncated payload."""
        path = save_checkpoint(tmp_path / "c.gbck", arrays, {"step": 1})
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CheckpointError) as exc_info:
            load_checkpoint(path)
        assert exc_info.value.reason == "truncated payload"

    @pytest.mark.unit
    def test_trailing_bytes(self, tmp_path: Path, arrays: dict[str, np.ndarray]) -> None:
        """Test that extra bytes are reported."""
        path = save_checkpoint(tmp_path / "c.gbck", arrays, {"step": 1})
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    @pytest.mark.unit
    def test_bad_magic(self, tmp_path: Path) -> None:
        """Test a file that is not a checkpoint."""
        path = tmp_path / "c.gbck"
        path.write_bytes(b"GBDS" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    @pytest.mark.unit
    def test_short_file(self, tmp_path: Path) -> None:
        """Test a file shorter than the prefix."""
        path = tmp_path / "c.gbck"
        path.write_bytes(b"GB")
        with pytest.raises(CheckpointError, match="truncated header"):
            load_checkpoint(path)

    @pytest.mark.unit
    @pytest.mark.parametrize("header", [{"step": 3}, {"names": ["w"]}, ["names", "shapes"]])
    def test_header_without_layout(self, tmp_path: Path, header: object) -> None:
        """Test a well-formed prefix whose header does not describe the arrays."""
        encoded = json.dumps(header).encode("utf-8")
        path = tmp_path / "c.gbck"
        path.write_bytes(struct.pack("<4sIQ", MAGIC, VERSION, len(encoded)) + encoded)
        with pytest.raises(CheckpointError, match="names/shapes") as exc_info:
            load_checkpoint(path)
        assert exc_info.value.reason == "header missing names/shapes"

    @pytest.mark.unit
    def test_header_names_and_shapes_disagree(self, tmp_path: Path) -> None:
        """Test two names with one shape."""
        encoded = json.dumps({"names": ["a", "b"], "shapes": [[1]]}).encode("utf-8")
        path = tmp_path / "c.gbck"
        path.write_bytes(struct.pack("<4sIQ", MAGIC, VERSION, len(encoded)) + encoded + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="differ in length"):
            load_checkpoint(path)
