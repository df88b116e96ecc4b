"""Tests for report inputs and SVG figures."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from gbdm.exceptions import ReportInputError
from gbdm.plots import (
    Series,
    convergence_series,
    plot_convergence,
    plot_forecast_overlay,
    read_csv_rows,
    read_forecasts,
    read_json,
)
from gbdm.trainer import ConvergenceLog


if TYPE_CHECKING:
    from pathlib import Path


def _run_dir(root: Path, name: str, log_mse: list[float]) -> Path:
    run = root / name
    run.mkdir()
    log = ConvergenceLog()
    for i, value in enumerate(log_mse):
        log.append(0.5 * (i + 1), 10 * (i + 1), value)
    log.write_csv(run / "convergence.csv")
    return run


class TestInputs:
    """Test cases for reading report inputs."""

    @pytest.mark.unit
    def test_missing_csv(self, tmp_path: Path) -> None:
        """Test an absent file."""
        with pytest.raises(ReportInputError, match="is missing"):
            read_csv_rows(tmp_path / "convergence.csv")

    @pytest.mark.unit
    def test_header_only_csv(self, tmp_path: Path) -> None:
        """Test a file without data rows."""
        path = tmp_path / "convergence.csv"
        ConvergenceLog().write_csv(path)
        with pytest.raises(ReportInputError) as exc_info:
            read_csv_rows(path)
        assert exc_info.value.reason == "has no data rows"

    @pytest.mark.unit
    @pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
    def test_bad_json(self, tmp_path: Path, text: str) -> None:
        """Test metrics files that are not JSON objects."""
        path = tmp_path / "metrics.json"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ReportInputError):
            read_json(path)

    @pytest.mark.unit
    def test_read_forecasts(self, tmp_path: Path) -> None:
        """Test grouping forecasts.csv rows by realization."""
        path = tmp_path / "forecasts.csv"
        path.write_text(
            "trajectory,realization,step,x0,x1\n"
            "0,0,0,1.0,2.0\n0,0,1,1.5,2.5\n0,1,0,0.0,0.0\n0,1,1,0.5,0.5\n1,0,0,9.0,9.0\n1,0,1,9.0,9.0\n",
            encoding="utf-8",
        )
        realizations = read_forecasts(path)
        assert len(realizations) == 2
        np.testing.assert_array_equal(realizations[0], [[1.0, 2.0], [1.5, 2.5]])
        with pytest.raises(ReportInputError):
            read_forecasts(path, trajectory=5)


class TestConvergenceSeries:
    """Test cases for averaging runs."""

    @pytest.mark.unit
    def test_single_run_has_no_band(self, tmp_path: Path) -> None:
        """Test one seed."""
        series = convergence_series("rlc/vgbdm", [_run_dir(tmp_path, "a", [-1.0, -2.0])])
        np.testing.assert_allclose(series.y, [-1.0, -2.0])
        assert series.low is None

    @pytest.mark.unit
    def test_band_over_common_evaluations(self, tmp_path: Path) -> None:
        """Test mean and min-max over the shortest run."""
        runs = [_run_dir(tmp_path, "a", [-1.0, -2.0, -3.0]), _run_dir(tmp_path, "b", [-3.0, -4.0])]
        series = convergence_series("rlc/vgbdm", runs)
        np.testing.assert_allclose(series.x, [0.5, 1.0])
        np.testing.assert_allclose(series.y, [-2.0, -3.0])
        np.testing.assert_allclose(series.low, [-3.0, -4.0])
        np.testing.assert_allclose(series.high, [-1.0, -2.0])

    @pytest.mark.unit
    def test_run_without_log(self, tmp_path: Path) -> None:
        """Test a run directory that never evaluated."""
        (tmp_path / "empty").mkdir()
        with pytest.raises(ReportInputError):
            convergence_series("x", [tmp_path / "empty"])


class TestFigures:
    """Test cases for SVG output."""

    @pytest.mark.unit
    def test_convergence_svg_is_deterministic(self, tmp_path: Path) -> None:
        """Test byte-identical figures for identical inputs."""
        x = np.array([0.5, 1.0, 1.5])
        series = [Series("a", x, np.array([-1.0, -2.0, -2.5]), x * 0 - 3.0, x * 0)]
        first = plot_convergence(series, tmp_path / "a.svg")
        second = plot_convergence(series, tmp_path / "b.svg")
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text(encoding="utf-8").lstrip().startswith("<?xml")

    @pytest.mark.unit
    def test_overlay(self, tmp_path: Path) -> None:
        """Test the realizations-vs-truth figure."""
        truth = np.linspace(0.0, 1.0, 10).reshape(10, 1)
        path = plot_forecast_overlay(truth, [truth + 0.1, truth - 0.1], tmp_path / "nested" / "overlay.svg")
        assert path.exists()
        assert "<svg" in path.read_text(encoding="utf-8")
