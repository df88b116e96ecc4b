"""Command-line entry point: ``gbdm generate | train | eval | report``.

Exit codes: 0 on success, 1 for user errors (bad config, bad arguments,
missing report inputs), 2 for runtime failures (NaN abort, I/O, blow-ups).
Every command records a ``run.json`` provenance entry in its output
directory, whether it succeeds or not.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from collections import defaultdict
from datetime import UTC, datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from gbdm import __version__
from gbdm.config import (
    SAMPLE_EFFICIENCY_SEEDS,
    TrainConfig,
    build_config,
    load_config,
    parse_overrides,
    sample_efficiency_sizes,
)
from gbdm.exceptions import ConfigurationError, GbdmError, ReportInputError, ValidationError
from gbdm.forecast import EvaluationSettings, evaluate_run
from gbdm.numkit.checkpoint import load_checkpoint
from gbdm.numkit.random import Rng
from gbdm.plots import (
    Series,
    convergence_series,
    plot_convergence,
    plot_forecast_overlay,
    plot_sample_efficiency,
    read_forecasts,
    read_json,
)
from gbdm.systems.dataset import generate_dataset, load_dataset
from gbdm.systems.specs import SYSTEMS, get_spec
from gbdm.trainer import CHECKPOINT_NAME, load_model, train


if TYPE_CHECKING:
    from collections.abc import Sequence


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER = 1
EXIT_RUNTIME = 2
MIN_SEEDS_FOR_STD = 3
REQUIRED_METRICS = ("system", "method", "n_train", "horizon", "mse", "log_mse")

RD_NOTE = (
    "reaction_diffusion runs are desk-scale smoke tests: 10k optimizer steps on at most 50 one-second "
    "trajectories of a 32x32 grid. Their errors show the method runs end to end on a PDE and are not "
    "comparable in magnitude to long GPU-scale training.\n"
)


# ----------------------------------------------------------------------
# Provenance
# ----------------------------------------------------------------------


def write_run_record(out_dir: Path, command: str, record: dict[str, Any]) -> Path:
    """Merge ``record`` under ``command`` into ``out_dir/run.json``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "run.json"
    existing: dict[str, Any] = {}
    if target.exists():
        try:
            existing = json.loads(target.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            logger.warning("Replacing unreadable %s", target)
    existing[command] = {"version": __version__, **record}
    target.write_text(json.dumps(existing, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return target


class _Run:
    """Times one command and writes its ``run.json`` entry on exit."""

    def __init__(self, out_dir: Path, command: str, record: dict[str, Any]) -> None:
        """Start a record for ``command`` in ``out_dir``."""
        self.out_dir = out_dir
        self.command = command
        self.record = {"started": datetime.now(UTC).isoformat(timespec="seconds"), **record}
        self._start = 0.0

    def __enter__(self) -> dict[str, Any]:
        """Start the clock; callers add results to the returned record."""
        self._start = time.perf_counter()
        return self.record

    def __exit__(self, exc_type: type[BaseException] | None, exc: BaseException | None, tb: object) -> None:
        """Write the record, marking it failed when an exception is propagating."""
        self.record["wall_seconds"] = round(time.perf_counter() - self._start, 3)
        self.record["status"] = "ok" if exc is None else "error"
        if exc is not None:
            self.record["error"] = str(exc)
        try:
            write_run_record(self.out_dir, self.command, self.record)
        except OSError:
            logger.exception("Could not write run.json in %s", self.out_dir)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    """Write one GBDS dataset file."""
    spec = get_spec(args.system)
    out = Path(args.out)
    record = {"system": args.system, "n_traj": args.n, "seed": args.seed, "split": args.split, "out": str(out)}
    with _Run(out.parent, f"generate:{out.name}", record):
        generate_dataset(spec, args.n, args.seed, out, split=args.split, threads=args.threads)
    return EXIT_OK


def _train_cell(config: TrainConfig, out: Path, args: argparse.Namespace, record: dict[str, Any]) -> None:
    record["seed"] = config.seed
    record["effective_config"] = config.resolved().model_dump(mode="json")
    result = train(config, out, stop_at=args.stop_at, resume=args.resume)
    record["steps"] = result.step
    record["final_loss"] = result.final_loss


def cmd_train(args: argparse.Namespace) -> int:
    """Train one run, or the sample-efficiency grid with ``--preset``."""
    out = Path(args.out)
    command = "train" if args.preset is None else f"train:{args.preset}"
    with _Run(out, command, {"config_file": args.config, "overrides": list(args.set)}) as record:
        config, merged = load_config(args.config, args.set)
        record["config"] = merged
        if args.preset is None:
            _train_cell(config, out, args, record)
            return EXIT_OK
        if args.resume is not None:
            raise ConfigurationError("--resume", "a single run, not a preset")
        for n in sample_efficiency_sizes(config.system):
            for seed in SAMPLE_EFFICIENCY_SEEDS:
                cell_values = {**merged, "n_train": str(n), "seed": str(seed)}
                cell_dir = out / f"n{n}_seed{seed}"
                logger.info("Sample-efficiency cell n=%d seed=%d -> %s", n, seed, cell_dir)
                with _Run(cell_dir, "train", {"config": cell_values}) as cell_record:
                    _train_cell(build_config(cell_values), cell_dir, args, cell_record)
                _evaluate(cell_dir / CHECKPOINT_NAME, cell_dir, [])
    return EXIT_OK


def _evaluate(checkpoint: Path, out: Path, overrides: Sequence[str]) -> None:
    record: dict[str, Any] = {"checkpoint": str(checkpoint), "overrides": list(overrides)}
    with _Run(out, "eval", record):
        model, trained, ckpt = load_model(checkpoint)
        values = {**trained.model_dump(mode="json"), **parse_overrides(overrides)}
        config = build_config(values).resolved()
        record["effective_config"] = config.model_dump(mode="json")
        record["seed"] = config.seed
        view = load_dataset(config.test_data).evaluation_view()
        settings = EvaluationSettings(
            horizon=int(config.eval_horizon or 1),
            n_trajectories=config.eval_trajectories,
            realizations=config.realizations,
            euler_substeps=config.euler_substeps,
            latent_mode=config.latent_mode,
        )
        report = evaluate_run(
            model,
            view,
            config.loss_config(view.header.dt),
            Rng(config.seed).stream("evaluate"),
            settings,
            method=config.method,
            seed=config.seed,
            n_train=int(ckpt.header.get("n_train", config.n_train or 0)),
            out_dir=out,
        )
        record["mse"] = report.mse
        record["log_mse"] = report.log_mse


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a trained run on its test set."""
    run_dir = Path(args.run)
    checkpoint = Path(args.checkpoint) if args.checkpoint else run_dir / CHECKPOINT_NAME
    _evaluate(checkpoint, Path(args.out) if args.out else run_dir, args.set)
    return EXIT_OK


# ----------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------


def _label(metrics: dict[str, Any]) -> str:
    return f"{metrics['system']}/{metrics['method']}"


def _check_metrics(run: Path, metrics: dict[str, Any]) -> None:
    missing = [key for key in REQUIRED_METRICS if key not in metrics]
    if missing:
        raise ReportInputError(run / "metrics.json", f"is missing {', '.join(missing)}")


def aggregate_metrics(runs: Sequence[tuple[Path, dict[str, Any]]]) -> list[dict[str, Any]]:
    """One row per (system, method, n_train) with mean and std over seeds.

    The std columns stay empty below three seeds.

    Raises:
        ReportInputError: If a run's metrics lack one of :data:`REQUIRED_METRICS`.
    """
    groups: dict[tuple[str, str, int], list[dict[str, Any]]] = defaultdict(list)
    for run, metrics in runs:
        _check_metrics(run, metrics)
        groups[(metrics["system"], metrics["method"], int(metrics["n_train"]))].append(metrics)
    rows = []
    for (system, method, n_train), items in sorted(groups.items()):
        mse = np.array([m["mse"] for m in items], dtype=np.float64)
        enough = len(items) >= MIN_SEEDS_FOR_STD
        row: dict[str, Any] = {
            "system": system,
            "method": method,
            "n_train": n_train,
            "n_seeds": len(items),
            "mse_mean": float(mse.mean()),
            "mse_std": float(mse.std()) if enough else "",
            "log_mse_mean": float(np.mean([m["log_mse"] for m in items])),
        }
        for term in ("fm", "kl_theta", "kl_z"):
            values = [m["loss_decomposition"][term]["mean"] for m in items if term in m.get("loss_decomposition", {})]
            row[f"{term}_mean"] = float(np.mean(values)) if values else ""
        names = sorted({name for m in items for name in m.get("cv_median", {})})
        for name in names:
            medians = [m["cv_median"][name] for m in items if name in m.get("cv_median", {})]
            row[f"cv_median_{name}"] = float(np.nanmean(medians)) if not all(map(math.isnan, medians)) else ""
        rows.append(row)
    return rows


def _write_table(path: Path, rows: list[dict[str, Any]]) -> Path:
    columns: list[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.7g}" if isinstance(v, float) else v) for k, v in row.items()})
    return path


def _overlay_truth(run_dir: Path, horizon: int) -> np.ndarray:
    config = load_checkpoint(run_dir / CHECKPOINT_NAME).header["config"]
    view = load_dataset(config["test_data"]).training_view()
    width = int(config["h"]) + 1
    return np.asarray(view.states[0, width : width + horizon]).reshape(horizon, -1)


def cmd_report(args: argparse.Namespace) -> int:
    """Aggregate runs into SVG figures, ``metrics_table.csv`` and ``NOTES.txt``."""
    out = Path(args.out)
    with _Run(out, "report", {"runs": [str(r) for r in args.runs]}):
        runs = [(Path(r), read_json(Path(r) / "metrics.json")) for r in args.runs]
        rows = aggregate_metrics(runs)
        by_label: dict[str, list[Path]] = defaultdict(list)
        for path, metrics in runs:
            by_label[_label(metrics)].append(path)
        series: list[Series] = [convergence_series(label, paths) for label, paths in sorted(by_label.items())]
        plot_convergence(series, out / "convergence.svg")

        points: dict[str, list[tuple[int, float, float]]] = defaultdict(list)
        for row in rows:
            std = row["mse_std"] if isinstance(row["mse_std"], float) else 0.0
            points[f"{row['system']}/{row['method']}"].append((row["n_train"], row["mse_mean"], std))
        plot_sample_efficiency(points, out / "sample_efficiency.svg")

        first, metrics = runs[0]
        realizations = read_forecasts(first / "forecasts.csv")
        truth = _overlay_truth(first, int(metrics["horizon"]))
        title = f"{_label(metrics)} test trajectory 0"
        plot_forecast_overlay(truth, realizations, out / "forecast_overlay.svg", title=title)

        _write_table(out / "metrics_table.csv", rows)
        (out / "NOTES.txt").write_text(RD_NOTE, encoding="utf-8")
    logger.info("Report for %d runs written to %s", len(runs), out)
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser and dispatch
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    """The argument parser for every subcommand."""
    parser = argparse.ArgumentParser(prog="gbdm", description="Variational grey-box dynamics matching.")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate a benchmark dataset")
    gen.add_argument("--system", required=True, choices=sorted(SYSTEMS))
    gen.add_argument("--n", type=int, required=True, help="number of trajectories")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--split", choices=("train", "test"), default="train")
    gen.add_argument("--threads", type=int, default=None)
    gen.add_argument("--out", required=True, help="destination .gbds file")
    gen.set_defaults(handler=cmd_generate)

    tr = sub.add_parser("train", help="train a model")
    tr.add_argument("--config", help="key = value config file")
    tr.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.add_argument("--stop-at", type=int, default=None, help="stop after this many steps")
    tr.add_argument("--preset", choices=("sample-efficiency",), default=None)
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a trained run")
    ev.add_argument("--run", required=True, help="run directory")
    ev.add_argument("--checkpoint", help="checkpoint (default: RUN/checkpoint.gbck)")
    ev.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override an evaluation key")
    ev.add_argument("--out", help="output directory (default: RUN)")
    ev.set_defaults(handler=cmd_eval)

    rep = sub.add_parser("report", help="aggregate runs into figures and tables")
    rep.add_argument("--runs", nargs="+", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(handler=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the command and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USER
    if args.verbose:
        logging.getLogger("gbdm").setLevel(logging.DEBUG)
    try:
        return int(args.handler(args))
    except (ValidationError, ConfigurationError, ReportInputError) as e:
        logger.error("%s", e)  # noqa: TRY400
        return EXIT_USER
    except (GbdmError, OSError) as e:
        logger.error("%s", e)  # noqa: TRY400
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
