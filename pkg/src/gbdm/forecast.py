"""Rollout inference and evaluation metrics.

A rollout repeatedly encodes the current history window, draws (z, θ) and
integrates the composed field over one normalized step with explicit Euler
substeps. Second-order models carry a velocity alongside the state.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from gbdm.exceptions import ShapeError, SimulationError, ValidationError
from gbdm.nets.encoders import Encoding, Gaussian, PosteriorPair
from gbdm.numkit.random import Rng
from gbdm.numkit.tensor import as_tensor, no_grad, zeros
from gbdm.objectives import compose, model_loss, segment_batch
from gbdm.systems.dataset import worker_threads
from gbdm.systems.simulators import BLOWUP_THRESHOLD
from gbdm.validators import validate_positive_int


if TYPE_CHECKING:
    from gbdm.nets.model import GreyBoxModel
    from gbdm.numkit.tensor import Tensor
    from gbdm.objectives import LossConfig
    from gbdm.systems.dataset import EvaluationView, TrainingView


logger = logging.getLogger(__name__)

LatentMode = Literal["per-window", "fixed"]
MIN_COVERAGE_REALIZATIONS = 20
MIN_CONSISTENCY_WINDOWS = 5
CV_MEAN_FLOOR = 1e-8


@dataclass(frozen=True)
class Forecast:
    """Predicted continuation of a batch of histories.

    Attributes:
        states: ``(B, n_steps, *state_shape)``.
        z: Latents used at every step, ``(B, n_steps, z_dim)``.
        theta: Physical parameters used at every step, ``(B, n_steps, theta_dim)``.
        realization: Realization index.
    """

    states: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    realization: int = 0

    @property
    def n_steps(self) -> int:
        """Forecast horizon."""
        return int(self.states.shape[1])


# ----------------------------------------------------------------------
# Rollout
# ----------------------------------------------------------------------


def _draw(model: GreyBoxModel, window: np.ndarray, rng: Rng, *, sample_latents: bool) -> Encoding:
    history = as_tensor(window)
    if sample_latents:
        return model.encoder.encode(history, rng)
    enc = model.encoder
    summary = enc.summarize(history)
    if enc.target_aware:
        z = zeros((window.shape[0], enc.z_dim))
    else:
        z = enc.posterior_z(summary).mu
    q_theta = enc.posterior_theta(summary, z)
    q_z = Gaussian(mu=z, sigma=z * 0.0 + 1.0)
    return Encoding(posterior=PosteriorPair(q_z=q_z, q_theta=q_theta), z=z, theta=q_theta.mu)


def _check_state(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_THRESHOLD:
        raise SimulationError("rollout", step)


def rollout(  # noqa: PLR0913
    model: GreyBoxModel,
    history: np.ndarray,
    n_steps: int,
    cfg: LossConfig,
    rng: Rng,
    *,
    euler_substeps: int = 10,
    latent_mode: LatentMode = "per-window",
    sample_latents: bool = True,
    realization: int = 0,
) -> Forecast:
    """Forecast ``n_steps`` points after each history window.

    Args:
        model: Trained model.
        history: ``(B, h + 1, *state_shape)`` observed windows.
        n_steps: Forecast horizon.
        cfg: Composition settings (``dt``, physics on/off, composition mode).
        rng: Stream for latent draws; step ``j`` uses ``rng.spawn(j)``.
        euler_substeps: Explicit Euler substeps per normalized step.
        latent_mode: Re-encode every step (``per-window``) or draw once (``fixed``).
        sample_latents: ``False`` uses posterior means (deterministic rollouts).
        realization: Index recorded on the result.

    Raises:
        SimulationError: If the predicted state blows up; ``step`` is the forecast index.
        ShapeError: If the window length does not match the model.
    """
    validate_positive_int(n_steps, "n_steps")
    validate_positive_int(euler_substeps, "euler_substeps")
    window = np.array(history, dtype=np.float32)
    if window.ndim < 3 or window.shape[1] != model.history + 1:  # noqa: PLR2004
        raise ShapeError("rollout", ("B", model.history + 1, "..."), window.shape)
    batch = window.shape[0]
    dtau = 1.0 / euler_substeps
    states, zs, thetas = [], [], []
    velocity: Tensor | None = None
    enc: Encoding | None = None
    with no_grad():
        for j in range(n_steps):
            if enc is None or latent_mode == "per-window":
                enc = _draw(model, window, rng.spawn(j), sample_latents=sample_latents)
            theta = enc.theta if cfg.physics_enabled else None
            x = as_tensor(window[:, -1])
            if model.order == 2:  # noqa: PLR2004
                if velocity is None:
                    velocity, _ = model.field(x, x * 0.0, 0.0, theta, enc.z)  # type: ignore[call-arg, misc]
                for s in range(euler_substeps):
                    _, accel = model.field(x, velocity, s * dtau, theta, enc.z)  # type: ignore[call-arg, misc]
                    f_p = model.physics(x, enc.theta) if cfg.physics_enabled else None
                    accel = compose(accel, f_p, cfg, order=2)
                    x, velocity = x + velocity * dtau, velocity + accel * dtau
            else:
                for s in range(euler_substeps):
                    v = model.field(x, s * dtau, theta, enc.z)  # type: ignore[call-arg]
                    f_p = model.physics(x, enc.theta) if cfg.physics_enabled else None
                    x = x + compose(v, f_p, cfg) * dtau
            nxt = x.numpy()
            _check_state(nxt, j)
            states.append(nxt)
            zs.append(enc.z.numpy())
            thetas.append(enc.theta.numpy())
            window = np.concatenate([window[:, 1:], nxt[:, None]], axis=1)
    logger.debug("Rolled out %d steps for %d windows", n_steps, batch)
    return Forecast(
        states=np.stack(states, axis=1),
        z=np.stack(zs, axis=1),
        theta=np.stack(thetas, axis=1),
        realization=realization,
    )


def rollout_realizations(  # noqa: PLR0913
    model: GreyBoxModel,
    history: np.ndarray,
    n_steps: int,
    cfg: LossConfig,
    rng: Rng,
    n_realizations: int,
    **kwargs: Any,  # noqa: ANN401
) -> list[Forecast]:
    """Independent realizations of :func:`rollout`, one stream each, run on worker threads."""
    validate_positive_int(n_realizations, "n_realizations")

    def one(r: int) -> Forecast:
        return rollout(model, history, n_steps, cfg, rng.spawn(r), realization=r, **kwargs)

    workers = min(worker_threads(), n_realizations)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_realizations)))


# ----------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ForecastScores:
    """Aggregate and per-step forecast errors."""

    mse: float
    log_mse: float
    per_step_mse: list[float]


def evaluate_forecasts(predicted: np.ndarray, truth: np.ndarray) -> ForecastScores:
    """Mean squared error over all steps, dimensions and trajectories.

    Both arrays are ``(B, n_steps, *state_shape)`` with matching shapes.

    Raises:
        ShapeError: If the shapes differ or there is no step axis.

    Examples:
        >>> evaluate_forecasts(np.array([[[1.0, 2.0]]]), np.zeros((1, 1, 2))).mse
        2.5
    """
    pred = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim < 2:  # noqa: PLR2004
        raise ShapeError("evaluate_forecasts", true.shape, pred.shape)
    sq = (pred - true) ** 2
    mse = float(sq.mean())
    per_step = sq.mean(axis=tuple(i for i in range(sq.ndim) if i != 1))
    with np.errstate(divide="ignore"):
        log_mse = float(np.log(mse)) if mse > 0 else -math.inf
    return ForecastScores(mse=mse, log_mse=log_mse, per_step_mse=[float(v) for v in np.atleast_1d(per_step)])


def coefficient_of_variation(estimates: np.ndarray) -> np.ndarray:
    """Population std over |mean| per column of ``(n_windows, p)`` estimates.

    Columns whose |mean| is below 1e-8 give NaN (undefined).

    Examples:
        >>> round(float(coefficient_of_variation(np.array([[1.0], [1.1], [0.9]]))[0]), 6)
        0.08165
    """
    values = np.asarray(estimates, dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    out = np.full(mean.shape, np.nan)
    ok = np.abs(mean) >= CV_MEAN_FLOOR
    out[ok] = std[ok] / np.abs(mean[ok])
    return out


@dataclass(frozen=True)
class ConsistencyTable:
    """Per-trajectory CVs of θ posterior means across sliding windows.

    Attributes:
        theta_names: Parameter names.
        cv: ``(n_traj, p)``, NaN where undefined.
        median: Median CV per parameter over defined entries.
        excluded: Number of undefined entries per parameter.
        mean_estimates: Per-trajectory mean θ estimate, ``(n_traj, p)``.
    """

    theta_names: tuple[str, ...]
    cv: np.ndarray
    median: dict[str, float]
    excluded: dict[str, int]
    mean_estimates: np.ndarray


def window_estimates(model: GreyBoxModel, states: np.ndarray, stride: int = 1) -> np.ndarray:
    """Posterior-mean θ for every sliding window of one trajectory, ``(n_windows, p)``."""
    width = model.history + 1
    starts = list(range(0, states.shape[0] - width + 1, stride))
    windows = np.stack([states[s : s + width] for s in starts]).astype(np.float32)
    with no_grad():
        enc = _draw(model, windows, Rng(0), sample_latents=False)
    return enc.theta.numpy().astype(np.float64)


def parameter_consistency(model: GreyBoxModel, view: TrainingView, stride: int = 1) -> ConsistencyTable:
    """Slide the history window along each trajectory and summarize θ estimates.

    Raises:
        ShapeError: If a trajectory holds fewer than five windows.
    """
    width = model.history + 1
    n_windows = (view.traj_len - width) // stride + 1
    if n_windows < MIN_CONSISTENCY_WINDOWS:
        raise ShapeError("parameter_consistency", f">= {MIN_CONSISTENCY_WINDOWS} windows", n_windows)
    names = model.prior.theta_names
    cvs, means = [], []
    for i in range(view.n_traj):
        est = window_estimates(model, view.states[i], stride)
        cvs.append(coefficient_of_variation(est))
        means.append(est.mean(axis=0))
    cv = np.array(cvs).reshape(view.n_traj, len(names))
    median = {}
    excluded = {}
    for j, name in enumerate(names):
        col = cv[:, j]
        defined = col[~np.isnan(col)]
        excluded[name] = int(np.isnan(col).sum())
        median[name] = float(np.median(defined)) if defined.size else math.nan
    return ConsistencyTable(
        theta_names=names,
        cv=cv,
        median=median,
        excluded=excluded,
        mean_estimates=np.array(means).reshape(view.n_traj, len(names)),
    )


def parameter_rmse(estimates: np.ndarray, truth: np.ndarray, names: tuple[str, ...]) -> dict[str, float]:
    """Root mean squared error of θ estimates per parameter."""
    if estimates.shape != truth.shape:
        raise ShapeError("parameter_rmse", truth.shape, estimates.shape)
    rmse = np.sqrt(np.mean((np.asarray(estimates, np.float64) - np.asarray(truth, np.float64)) ** 2, axis=0))
    return {name: float(v) for name, v in zip(names, rmse, strict=True)}


@dataclass(frozen=True)
class ModeCoverage:
    """Where realizations of the ambiguous history end up."""

    modes: list[float]
    fractions: list[float]
    mean_endpoint: float
    endpoints: list[float]


def mode_coverage(  # noqa: PLR0913
    model: GreyBoxModel,
    view: TrainingView,
    n_realizations: int,
    cfg: LossConfig,
    rng: Rng,
    *,
    euler_substeps: int = 10,
) -> ModeCoverage:
    """Roll out ``n_realizations`` continuations of the first test history.

    Each endpoint is assigned to the nearest distinct true final state.

    Raises:
        ValidationError: If fewer than 20 realizations are requested.
    """
    if n_realizations < MIN_COVERAGE_REALIZATIONS:
        raise ValidationError(field="n_realizations", value=n_realizations, reason="must be at least 20")
    width = model.history + 1
    finals = view.states[:, -1].reshape(view.n_traj, -1)[:, 0].astype(np.float64)
    modes = sorted({round(float(v), 6) for v in finals})
    history = np.repeat(view.states[:1, :width], n_realizations, axis=0)
    forecast = rollout(model, history, view.traj_len - width, cfg, rng, euler_substeps=euler_substeps)
    endpoints = forecast.states[:, -1].reshape(n_realizations, -1)[:, 0].astype(np.float64)
    nearest = np.argmin(np.abs(endpoints[:, None] - np.array(modes)[None, :]), axis=1)
    fractions = [float(np.mean(nearest == i)) for i in range(len(modes))]
    return ModeCoverage(
        modes=modes,
        fractions=fractions,
        mean_endpoint=float(endpoints.mean()),
        endpoints=[float(e) for e in endpoints],
    )


# ----------------------------------------------------------------------
# Run evaluation and report files
# ----------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Everything ``metrics.json`` records for one trained run."""

    system: str
    method: str
    seed: int
    n_train: int
    horizon: int
    mse: float
    log_mse: float
    per_step_mse: list[float]
    param_rmse: dict[str, float] = field(default_factory=dict)
    cv_median: dict[str, float] = field(default_factory=dict)
    cv_excluded: dict[str, int] = field(default_factory=dict)
    loss_decomposition: dict[str, dict[str, float]] = field(default_factory=dict)
    mode_coverage: dict[str, Any] | None = None

    def write(self, path: Path | str) -> Path:
        """Write ``metrics.json``."""
        target = Path(path)
        target.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return target


def loss_decomposition(  # noqa: PLR0913
    model: GreyBoxModel,
    view: TrainingView,
    cfg: LossConfig,
    rng: Rng,
    *,
    n_segments: int = 128,
) -> dict[str, dict[str, float]]:
    """Mean and std of each loss term over individually evaluated test segments."""
    rows: dict[str, list[float]] = {"fm": [], "kl_theta": [], "kl_z": [], "total": []}
    with no_grad():
        for i in range(n_segments):
            seg = segment_batch(view, model.history, 1, rng.stream("segments").spawn(i))
            terms = model_loss(model, seg, cfg, rng.stream("loss").spawn(i)).as_floats()
            for key, value in terms.items():
                rows[key].append(value)
    return {key: {"mean": float(np.mean(v)), "std": float(np.std(v))} for key, v in rows.items()}


def write_forecasts_csv(path: Path | str, forecasts: list[Forecast], trajectory_ids: list[int]) -> Path:
    """Write ``forecasts.csv``: trajectory, realization, step, then flattened state components."""
    target = Path(path)
    with target.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        size = int(np.prod(forecasts[0].states.shape[2:])) if forecasts else 0
        writer.writerow(["trajectory", "realization", "step", *[f"x{i}" for i in range(size)]])
        for fc in forecasts:
            flat = fc.states.reshape(fc.states.shape[0], fc.states.shape[1], -1)
            for row, traj in enumerate(trajectory_ids):
                for step in range(fc.n_steps):
                    writer.writerow([traj, fc.realization, step, *[f"{v:.7g}" for v in flat[row, step]]])
    return target


def write_cv_table(path: Path | str, table: ConsistencyTable) -> Path:
    """Write ``cv_table.csv``: one row per trajectory, one CV column per parameter."""
    target = Path(path)
    with target.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory", *[f"cv_{n}" for n in table.theta_names]])
        for i, row in enumerate(table.cv):
            writer.writerow([i, *[("nan" if np.isnan(v) else f"{v:.7g}") for v in row]])
    return target


@dataclass(frozen=True)
class EvaluationSettings:
    """Knobs of a full evaluation pass."""

    horizon: int
    n_trajectories: int
    realizations: int = 1
    euler_substeps: int = 10
    latent_mode: LatentMode = "per-window"
    coverage_realizations: int = 100


def forecast_test_set(
    model: GreyBoxModel,
    view: TrainingView,
    cfg: LossConfig,
    rng: Rng,
    settings: EvaluationSettings,
) -> tuple[list[Forecast], np.ndarray, int]:
    """Roll out from the start of the first test trajectories.

    Returns:
        The realizations, the matching ground truth and the horizon actually
        used (clamped to the available trajectory length).
    """
    width = model.history + 1
    horizon = min(settings.horizon, view.traj_len - width)
    if horizon < settings.horizon:
        logger.warning("Test trajectories allow only %d forecast steps (requested %d)", horizon, settings.horizon)
    n = min(settings.n_trajectories, view.n_traj)
    states = view.states[:n]
    forecasts = rollout_realizations(
        model,
        states[:, :width],
        horizon,
        cfg,
        rng,
        settings.realizations,
        euler_substeps=settings.euler_substeps,
        latent_mode=settings.latent_mode,
    )
    return forecasts, np.array(states[:, width : width + horizon]), horizon


def evaluate_run(  # noqa: PLR0913
    model: GreyBoxModel,
    view: EvaluationView,
    cfg: LossConfig,
    rng: Rng,
    settings: EvaluationSettings,
    *,
    method: str,
    seed: int,
    n_train: int,
    out_dir: Path | str | None = None,
) -> MetricsReport:
    """Forecast metrics, parameter recovery, consistency and loss decomposition for one run.

    When ``out_dir`` is given, ``metrics.json``, ``forecasts.csv`` and
    ``cv_table.csv`` are written there.
    """
    forecasts, truth, horizon = forecast_test_set(model, view, cfg, rng.stream("forecast"), settings)
    predicted = np.concatenate([f.states for f in forecasts])
    scores = evaluate_forecasts(predicted, np.concatenate([truth] * len(forecasts)))
    report = MetricsReport(
        system=view.header.system,
        method=method,
        seed=seed,
        n_train=n_train,
        horizon=horizon,
        mse=scores.mse,
        log_mse=scores.log_mse,
        per_step_mse=scores.per_step_mse,
        loss_decomposition=loss_decomposition(model, view, cfg, rng.stream("decomposition")),
    )
    table: ConsistencyTable | None = None
    if cfg.physics_enabled and model.prior.theta_dim:
        subset = view.subset(settings.n_trajectories)
        if (subset.traj_len - model.history - 1) + 1 >= MIN_CONSISTENCY_WINDOWS:
            table = parameter_consistency(model, subset)
            report.cv_median = table.median
            report.cv_excluded = table.excluded
            report.param_rmse = parameter_rmse(table.mean_estimates, subset.theta, table.theta_names)
    if view.header.system == "bimodal_toy":
        coverage = mode_coverage(model, view, settings.coverage_realizations, cfg, rng.stream("coverage"))
        report.mode_coverage = asdict(coverage)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write(out / "metrics.json")
        write_forecasts_csv(out / "forecasts.csv", forecasts, list(range(truth.shape[0])))
        if table is not None:
            write_cv_table(out / "cv_table.csv", table)
    logger.info("Evaluation: mse=%.4g log_mse=%.4g horizon=%d", report.mse, report.log_mse, horizon)
    return report
