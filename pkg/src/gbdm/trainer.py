"""The optimization loop, checkpoints and the convergence log.

Every random draw of step ``s`` comes from ``Rng(seed).stream(name).spawn(s)``,
so a run is a pure function of its config and seed, and a run resumed
from a checkpoint continues exactly where an uninterrupted run would be.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from gbdm.config import TrainConfig
from gbdm.exceptions import CheckpointError, ConfigurationError, NumericalError, SimulationError, TrainingAbortedError
from gbdm.forecast import EvaluationSettings, evaluate_forecasts, forecast_test_set
from gbdm.nets.model import GreyBoxModel, build_model
from gbdm.nets.priors import DataStats
from gbdm.numkit.autograd import backward
from gbdm.numkit.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gbdm.numkit.optim import AdamW, clip_grad_norm, cosine_lr
from gbdm.numkit.random import Rng
from gbdm.objectives import model_loss, segment_batch
from gbdm.systems.dataset import load_dataset


if TYPE_CHECKING:
    from gbdm.objectives import LossBreakdown
    from gbdm.systems.dataset import TrainingView


logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.gbck"
LOSS_COLUMNS = ("step", "wall_seconds", "fm", "kl_theta", "kl_z", "total", "lr")
CONVERGENCE_COLUMNS = ("minutes", "step", "log_mse")

__all__ = [
    "CHECKPOINT_NAME",
    "ConvergenceLog",
    "TrainResult",
    "Trainer",
    "load_model",
    "segment_batch",
    "train",
]


@dataclass
class ConvergenceLog:
    """Test forecast logMSE against wall-clock minutes and step."""

    rows: list[tuple[float, int, float]] = field(default_factory=list)

    def append(self, minutes: float, step: int, log_mse: float) -> None:
        """Add a row; minutes never decrease."""
        if self.rows:
            minutes = max(minutes, self.rows[-1][0])
        self.rows.append((minutes, step, log_mse))

    @property
    def last_minutes(self) -> float:
        """Minutes of the latest row (0 when empty)."""
        return self.rows[-1][0] if self.rows else 0.0

    def write_csv(self, path: Path | str) -> Path:
        """Write ``convergence.csv``."""
        target = Path(path)
        with target.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CONVERGENCE_COLUMNS)
            for minutes, step, log_mse in self.rows:
                writer.writerow([f"{minutes:.6f}", step, f"{log_mse:.7g}"])
        return target

    @classmethod
    def read_csv(cls, path: Path | str) -> ConvergenceLog:
        """Read a log written by :meth:`write_csv`; a missing file gives an empty log."""
        source = Path(path)
        log = cls()
        if not source.exists():
            return log
        with source.open(encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(float(row["minutes"]), int(row["step"]), float(row["log_mse"]))
        return log


@dataclass(frozen=True)
class TrainResult:
    """Where a finished (or stopped) run left its outputs."""

    checkpoint: Path
    loss_csv: Path
    convergence_csv: Path
    step: int
    convergence: ConvergenceLog
    final_loss: dict[str, float] | None = None


# ----------------------------------------------------------------------
# Checkpoint payloads
# ----------------------------------------------------------------------


def _model_from_config(config: TrainConfig, view: TrainingView, stats: DataStats) -> GreyBoxModel:
    header = view.header
    return build_model(
        header.spec,
        stats,
        history=int(config.h or header.spec.history),
        z_dim=int(config.z_dim or header.spec.z_dim),
        seed=config.seed,
        physics_enabled=bool(config.physics_enabled),
        latents_enabled=bool(config.latents_enabled),
        target_aware_latent=config.target_aware_latent,
        input_signal=header.input_signal,
    )


def load_model(path: Path | str) -> tuple[GreyBoxModel, TrainConfig, Checkpoint]:
    """Rebuild the trained model stored in a checkpoint.

    Returns:
        The model with its weights loaded, the resolved config it was
        trained with and the raw checkpoint.

    Raises:
        CheckpointError: If the header lacks the run config or a weight is missing.
    """
    ckpt = load_checkpoint(path)
    if "config" not in ckpt.header:
        raise CheckpointError(path, "header has no 'config' entry")
    config = TrainConfig.model_validate(ckpt.header["config"])
    dataset = load_dataset(config.train_data)
    stats = DataStats.from_arrays(ckpt.arrays)
    model = _model_from_config(config, dataset.training_view(), stats)
    weights = {k.removeprefix("model."): v for k, v in ckpt.arrays.items() if k.startswith("model.")}
    try:
        model.load_state_dict(weights)
    except CheckpointError as e:
        raise CheckpointError(path, e.reason) from e
    return model, config, ckpt


# ----------------------------------------------------------------------
# Trainer
# ----------------------------------------------------------------------


class Trainer:
    """One training run: data views, model, optimizer and output files.

    Attributes:
        config: The resolved run config.
        out_dir: Directory receiving checkpoints and CSV logs.
        view: Training trajectories (observed components only).
        test_view: The fixed test subset used for periodic evaluation.
        model: The grey-box model being trained.
        optimizer: AdamW over the model parameters.
        step: Number of completed optimizer steps.
    """

    def __init__(self, config: TrainConfig, out_dir: Path | str) -> None:
        """Load the datasets and initialize the model from ``config``.

        Raises:
            ConfigurationError: If a dataset belongs to a different system.
        """
        self.config = config.resolved()
        self.out_dir = Path(out_dir)
        train_set = load_dataset(self.config.train_data)
        test_set = load_dataset(self.config.test_data)
        for key, data in (("train_data", train_set), ("test_data", test_set)):
            if data.header.system != self.config.system:
                raise ConfigurationError(key, f"a {self.config.system} dataset", details=f"found {data.header.system}")
        view = train_set.training_view()
        self.view = view.subset(self.config.n_train) if self.config.n_train else view
        self.test_view = test_set.training_view().subset(self.config.eval_trajectories)
        self.stats = DataStats.from_states(self.view.states)
        self.model = _model_from_config(self.config, self.view, self.stats)
        self.params = self.model.parameters()
        self.names = [name for name, _ in self.model.named_parameters()]
        self.optimizer = AdamW(self.params, weight_decay=self.config.weight_decay)
        self.loss_cfg = self.config.loss_config(self.view.header.dt)
        self.total_steps = int(self.config.total_steps or 0)
        self.step = 0
        self.convergence = ConvergenceLog()
        self.last_checkpoint: Path | None = None
        self._rng = Rng(self.config.seed)
        self._minutes_offset = 0.0
        self._saved_step = -1
        logger.info(
            "Training %s (%s) on %d trajectories: %d parameters, %d steps",
            self.config.system,
            self.config.method,
            self.view.n_traj,
            self.model.num_parameters(),
            self.total_steps,
        )

    @property
    def checkpoint_path(self) -> Path:
        """The latest checkpoint of the run."""
        return self.out_dir / CHECKPOINT_NAME

    @property
    def loss_csv(self) -> Path:
        """Per-step loss log."""
        return self.out_dir / "loss.csv"

    @property
    def convergence_csv(self) -> Path:
        """Evaluation log."""
        return self.out_dir / "convergence.csv"

    # ------------------------------------------------------------------
    # Checkpoints

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Weights, optimizer moments and data scales."""
        arrays: dict[str, np.ndarray] = {}
        for name, p in zip(self.names, self.params, strict=True):
            arrays[f"model.{name}"] = p.data
        for name, m, v in zip(self.names, self.optimizer.state.m, self.optimizer.state.v, strict=True):
            arrays[f"adam.m.{name}"] = m
            arrays[f"adam.v.{name}"] = v
        arrays.update(self.stats.to_arrays())
        return arrays

    def state_header(self) -> dict[str, Any]:
        """Checkpoint metadata; no wall-clock values, so equal runs give equal bytes."""
        header = self.view.header
        return {
            "step": self.step,
            "total_steps": self.total_steps,
            "config": self.config.model_dump(mode="json"),
            "optimizer": {"name": "adamw", **self.optimizer.hyperparameters(), "step": self.optimizer.state.step},
            "system": header.system,
            "n_train": self.view.n_traj,
            "dt": header.dt,
            "input_signal": header.input_signal,
        }

    def save(self) -> Path:
        """Write ``checkpoint.gbck`` and a per-step copy under ``checkpoints/``."""
        arrays = self.state_arrays()
        header = self.state_header()
        save_checkpoint(self.out_dir / "checkpoints" / f"step_{self.step:07d}.gbck", arrays, header)
        self.last_checkpoint = save_checkpoint(self.checkpoint_path, arrays, header)
        self._saved_step = self.step
        logger.debug("Checkpoint at step %d", self.step)
        return self.last_checkpoint

    def restore(self, path: Path | str) -> None:
        """Continue from a checkpoint written by a run with the same config.

        Raises:
            ConfigurationError: If the checkpoint was trained with another config.
            CheckpointError: If weights or moments are missing.
        """
        ckpt = load_checkpoint(path)
        saved = ckpt.header.get("config")
        current = self.config.model_dump(mode="json")
        if saved != current:
            changed = sorted(k for k in current if saved is None or saved.get(k) != current[k])
            raise ConfigurationError("resume", "the config the checkpoint was trained with", details=", ".join(changed))
        try:
            self.model.load_state_dict({n: ckpt.arrays[f"model.{n}"] for n in self.names})
            self.optimizer.state.m = [ckpt.arrays[f"adam.m.{n}"].copy() for n in self.names]
            self.optimizer.state.v = [ckpt.arrays[f"adam.v.{n}"].copy() for n in self.names]
        except KeyError as e:
            raise CheckpointError(path, f"missing array {e.args[0]}") from e
        self.optimizer.state.step = int(ckpt.header["optimizer"]["step"])
        self.step = ckpt.step
        self.last_checkpoint = Path(path)
        self._saved_step = self.step
        self.convergence = ConvergenceLog.read_csv(self.convergence_csv)
        self._minutes_offset = self.convergence.last_minutes
        logger.info("Resumed from %s at step %d", path, self.step)

    # ------------------------------------------------------------------
    # Steps

    def train_step(self) -> tuple[LossBreakdown, float]:
        """Run one optimizer step.

        Returns:
            The loss terms before the update and the learning rate used.

        Raises:
            NumericalError: If the loss or a gradient is not finite.
        """
        step = self.step
        batch = segment_batch(
            self.view,
            self.model.history,
            int(self.config.batch_size or 64),
            self._rng.stream("batch").spawn(step),
            second_order=self.model.order == 2,  # noqa: PLR2004
        )
        loss = model_loss(self.model, batch, self.loss_cfg, self._rng.stream("loss").spawn(step))
        grads = backward(loss.total, self.params)
        clipped, norm = clip_grad_norm([grads[p] for p in self.params], self.config.grad_clip)
        if norm > self.config.grad_clip:
            logger.warning("Step %d: gradient norm %.3g clipped to %.3g", step, norm, self.config.grad_clip)
        lr = cosine_lr(step, self.total_steps, self.config.lr, self.config.lr_min)
        self.optimizer.step(dict(zip(self.params, clipped, strict=True)), lr)
        self.step += 1
        return loss, lr

    def evaluate(self) -> float:
        """Forecast logMSE on the fixed test subset (inf if a rollout blows up)."""
        settings = EvaluationSettings(
            horizon=int(self.config.eval_horizon or 1),
            n_trajectories=self.config.eval_trajectories,
            euler_substeps=self.config.euler_substeps,
            latent_mode=self.config.latent_mode,
        )
        rng = self._rng.stream("eval").spawn(self.step)
        try:
            forecasts, truth, _ = forecast_test_set(self.model, self.test_view, self.loss_cfg, rng, settings)
        except SimulationError as e:
            logger.warning("Evaluation rollout at step %d blew up: %s", self.step, e)
            return math.inf
        return evaluate_forecasts(forecasts[0].states, truth).log_mse

    # ------------------------------------------------------------------
    # Loop

    def run(self, stop_at: int | None = None) -> TrainResult:
        """Train until ``total_steps`` (or ``stop_at``), checkpointing at each evaluation.

        Raises:
            TrainingAbortedError: On a non-finite loss or gradient; the last
                good checkpoint is left in place.
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        end = self.total_steps if stop_at is None else min(stop_at, self.total_steps)
        if self.last_checkpoint is None:
            self.save()
        fresh = self.step == 0 or not self.loss_csv.exists()
        start = time.perf_counter()
        final: dict[str, float] | None = None
        with self.loss_csv.open("w" if fresh else "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(LOSS_COLUMNS)
            while self.step < end:
                try:
                    loss, lr = self.train_step()
                except NumericalError as e:
                    logger.error("Non-finite value at step %d: %s", self.step, e)  # noqa: TRY400
                    raise TrainingAbortedError(self.step, self.last_checkpoint, details=str(e)) from e
                final = loss.as_floats()
                elapsed = time.perf_counter() - start
                terms = [f"{final[k]:.7g}" for k in LOSS_COLUMNS[2:6]]
                writer.writerow([self.step - 1, f"{elapsed:.3f}", *terms, f"{lr:.7g}"])
                if self.step % self.config.eval_every == 0 or self.step == self.total_steps:
                    fh.flush()
                    self._checkpoint_and_evaluate(start, final)
        if self._saved_step != self.step:
            self.save()
        self.convergence.write_csv(self.convergence_csv)
        return TrainResult(
            checkpoint=self.checkpoint_path,
            loss_csv=self.loss_csv,
            convergence_csv=self.convergence_csv,
            step=self.step,
            convergence=self.convergence,
            final_loss=final,
        )

    def _checkpoint_and_evaluate(self, start: float, loss: dict[str, float]) -> None:
        log_mse = self.evaluate()
        minutes = self._minutes_offset + (time.perf_counter() - start) / 60.0
        self.convergence.append(minutes, self.step, log_mse)
        self.convergence.write_csv(self.convergence_csv)
        self.save()
        logger.info(
            "step %d/%d: total=%.4g fm=%.4g kl_theta=%.4g kl_z=%.4g test_log_mse=%.4g",
            self.step,
            self.total_steps,
            loss["total"],
            loss["fm"],
            loss["kl_theta"],
            loss["kl_z"],
            log_mse,
        )


def train(
    config: TrainConfig,
    out_dir: Path | str,
    *,
    stop_at: int | None = None,
    resume: Path | str | None = None,
) -> TrainResult:
    """Train a model described by ``config``, writing outputs under ``out_dir``.

    Args:
        config: Run config (resolved here).
        out_dir: Output directory.
        stop_at: Stop after this many completed steps (the schedule still
            spans ``total_steps``); resume later from the checkpoint.
        resume: Checkpoint to continue from.

    Returns:
        Paths of the written outputs and the convergence log.

    Raises:
        TrainingAbortedError: On a non-finite loss or gradient.
        ConfigurationError: If the datasets or the resumed checkpoint do not match ``config``.
    """
    trainer = Trainer(config, out_dir)
    if resume is not None:
        trainer.restore(resume)
    return trainer.run(stop_at)
