"""Report figures as static SVG files.

Figures are drawn with matplotlib's object API (no pyplot state) inside an
``rc_context`` that fixes the SVG id salt, and saved without a date, so
unchanged inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from gbdm.exceptions import ReportInputError


if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence

    from matplotlib.axes import Axes


logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "gbdm", "svg.fonttype": "path", "path.simplify": False}
FIGSIZE = (6.0, 4.0)


@dataclass(frozen=True)
class Series:
    """A named curve: ``x`` against ``y`` with an optional min-max band."""

    label: str
    x: np.ndarray
    y: np.ndarray
    low: np.ndarray | None = None
    high: np.ndarray | None = None


# ----------------------------------------------------------------------
# Inputs
# ----------------------------------------------------------------------


def read_csv_rows(path: Path | str) -> list[dict[str, str]]:
    """Rows of a report input CSV.

    Raises:
        ReportInputError: If the file is absent or holds no data rows.
    """
    source = Path(path)
    if not source.exists():
        raise ReportInputError(source, "is missing")
    with source.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ReportInputError(source, "has no data rows")
    return rows


def read_json(path: Path | str) -> dict[str, Any]:
    """A run's ``metrics.json`` or ``run.json``.

    Raises:
        ReportInputError: If the file is absent or not a JSON object.
    """
    source = Path(path)
    if not source.exists():
        raise ReportInputError(source, "is missing")
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ReportInputError(source, "is not valid JSON", details=str(e)) from e
    if not isinstance(data, dict):
        raise ReportInputError(source, "is not a JSON object")
    return data


def convergence_series(label: str, run_dirs: Sequence[Path]) -> Series:
    """Mean logMSE against mean minutes over the evaluations every run reached.

    Raises:
        ReportInputError: If a run lacks a non-empty ``convergence.csv``.
    """
    curves = []
    for run in run_dirs:
        rows = read_csv_rows(run / "convergence.csv")
        curves.append(np.array([[float(r["minutes"]), float(r["log_mse"])] for r in rows]))
    n = min(len(c) for c in curves)
    stacked = np.stack([c[:n] for c in curves])
    minutes = stacked[:, :, 0].mean(axis=0)
    values = stacked[:, :, 1]
    if len(curves) == 1:
        return Series(label, minutes, values[0])
    return Series(label, minutes, values.mean(axis=0), values.min(axis=0), values.max(axis=0))


# ----------------------------------------------------------------------
# Figures
# ----------------------------------------------------------------------


def _save(fig: Figure, path: Path | str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with mpl.rc_context(SVG_RC):
        fig.savefig(target, format="svg", metadata={"Date": None, "Creator": "gbdm"})
    logger.debug("Wrote %s", target)
    return target


def _new_axes(title: str, xlabel: str, ylabel: str) -> tuple[Figure, Axes]:
    with mpl.rc_context(SVG_RC):
        fig = Figure(figsize=FIGSIZE)
        ax = fig.add_subplot()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(visible=True, alpha=0.3)
    return fig, ax


def plot_convergence(
    series: Iterable[Series],
    path: Path | str,
    *,
    title: str = "Forecast logMSE vs. training time",
) -> Path:
    """Line per method, shaded min-max band when several seeds contribute."""
    fig, ax = _new_axes(title, "wall-clock minutes", "test logMSE")
    for s in series:
        (line,) = ax.plot(s.x, s.y, marker="o", markersize=3, label=s.label)
        if s.low is not None and s.high is not None:
            ax.fill_between(s.x, s.low, s.high, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_sample_efficiency(
    points: Mapping[str, Sequence[tuple[int, float, float]]],
    path: Path | str,
    *,
    title: str = "Forecast MSE across training set sizes",
) -> Path:
    """MSE against the number of training trajectories, with std error bars.

    Args:
        points: Per method label, ``(n_train, mean_mse, std_mse)`` tuples.
        path: Output SVG.
        title: Figure title.
    """
    fig, ax = _new_axes(title, "training trajectories", "test MSE")
    for label, rows in points.items():
        ordered = sorted(rows)
        n = [r[0] for r in ordered]
        ax.errorbar(n, [r[1] for r in ordered], yerr=[r[2] for r in ordered], marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_forecast_overlay(
    truth: np.ndarray,
    realizations: Sequence[np.ndarray],
    path: Path | str,
    *,
    component: int = 0,
    title: str = "Forecast realizations vs. ground truth",
) -> Path:
    """One state component of one test trajectory: truth and every realization.

    Args:
        truth: ``(n_steps, state_size)`` ground truth.
        realizations: ``(n_steps, state_size)`` predictions.
        path: Output SVG.
        component: Flattened state index to draw.
        title: Figure title.
    """
    fig, ax = _new_axes(title, "forecast step", f"x{component}")
    steps = np.arange(truth.shape[0])
    for i, pred in enumerate(realizations):
        label = "realizations" if i == 0 else None
        ax.plot(steps, pred[:, component], color="tab:blue", alpha=0.4, linewidth=1, label=label)
    ax.plot(steps, truth[:, component], color="black", linewidth=2, label="truth")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def read_forecasts(path: Path | str, trajectory: int = 0) -> list[np.ndarray]:
    """Realizations of one trajectory from ``forecasts.csv``, each ``(n_steps, state_size)``.

    Raises:
        ReportInputError: If the file is missing, empty or lacks the trajectory.
    """
    rows = [r for r in read_csv_rows(path) if int(r["trajectory"]) == trajectory]
    if not rows:
        raise ReportInputError(path, f"has no rows for trajectory {trajectory}")
    columns = [k for k in rows[0] if k.startswith("x")]
    by_realization: dict[int, list[list[float]]] = {}
    for r in rows:
        by_realization.setdefault(int(r["realization"]), []).append([float(r[c]) for c in columns])
    return [np.array(by_realization[k]) for k in sorted(by_realization)]
