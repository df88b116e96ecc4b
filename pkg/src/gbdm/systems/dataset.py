"""GBDS trajectory datasets: generation, file format and read views.

Layout: ``b"GBDS"``, u32 little-endian version (1), u64 little-endian
header length, UTF-8 JSON header, then every state as little-endian float32
in [trajectory][time][state] order followed by every generating parameter
as float32 in [trajectory][param] order.

Training code only ever receives a :class:`TrainingView`, which carries the
observed states and no parameters.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from gbdm.exceptions import DatasetFormatError, SimulationError
from gbdm.numkit.random import Rng
from gbdm.systems.simulators import Trajectory, sample_initial_state, sample_params, simulate
from gbdm.systems.specs import get_spec
from gbdm.validators import validate_positive_int


if TYPE_CHECKING:
    from gbdm.systems.specs import SystemSpec


logger = logging.getLogger(__name__)

MAGIC = b"GBDS"
VERSION = 1
MAX_ATTEMPTS = 10
FORMAT_NOTE = "float32 LE states [traj][time][state], then float32 LE params [traj][param]"
_PREFIX = struct.Struct("<4sIQ")
_HEADER_KEYS = frozenset(
    {
        "system",
        "dt",
        "n_traj",
        "traj_len",
        "state_shape",
        "param_names",
        "input_signal",
        "generator_seed",
        "format_note",
    },
)


def worker_threads() -> int:
    """Worker thread cap from ``GBDM_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("GBDM_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    return value if value > 0 else max(os.cpu_count() or 1, 1)


@dataclass(frozen=True)
class DatasetHeader:
    """The JSON header of a GBDS file."""

    system: str
    dt: float
    n_traj: int
    traj_len: int
    state_shape: tuple[int, ...]
    param_names: tuple[str, ...]
    input_signal: str
    generator_seed: int
    format_note: str = FORMAT_NOTE

    @property
    def spec(self) -> SystemSpec:
        """The registered system this file was generated from."""
        return get_spec(self.system)

    def to_json(self) -> dict[str, Any]:
        """Header as a JSON-ready mapping."""
        raw = asdict(self)
        raw["state_shape"] = list(self.state_shape)
        raw["param_names"] = list(self.param_names)
        return raw

    @classmethod
    def from_json(cls, path: Path, raw: dict[str, Any]) -> DatasetHeader:
        """Decode and check a header mapping.

        Raises:
            DatasetFormatError: If keys are missing or have the wrong type.
        """
        missing = _HEADER_KEYS - set(raw)
        if missing:
            raise DatasetFormatError(path, f"header is missing {sorted(missing)}")
        try:
            return cls(
                system=str(raw["system"]),
                dt=float(raw["dt"]),
                n_traj=int(raw["n_traj"]),
                traj_len=int(raw["traj_len"]),
                state_shape=tuple(int(s) for s in raw["state_shape"]),
                param_names=tuple(str(p) for p in raw["param_names"]),
                input_signal=str(raw["input_signal"]),
                generator_seed=int(raw["generator_seed"]),
                format_note=str(raw["format_note"]),
            )
        except (TypeError, ValueError) as e:
            raise DatasetFormatError(path, "header fields have the wrong type") from e

    @property
    def state_size(self) -> int:
        """Number of values in one stored state."""
        return int(np.prod(self.state_shape, dtype=np.int64))


class TrainingView:
    """Observed states only; generating parameters are not reachable from here."""

    __slots__ = ("_states", "header")

    def __init__(self, header: DatasetHeader, states: np.ndarray) -> None:
        """Wrap observed ``states`` of shape ``(n_traj, traj_len, *observed_shape)``."""
        self.header = header
        view = np.asarray(states, dtype=np.float32)
        view.flags.writeable = False
        self._states = view

    @property
    def states(self) -> np.ndarray:
        """Read-only observed states."""
        return self._states

    @property
    def n_traj(self) -> int:
        """Number of trajectories."""
        return int(self._states.shape[0])

    @property
    def traj_len(self) -> int:
        """Points per trajectory."""
        return int(self._states.shape[1])

    @property
    def state_shape(self) -> tuple[int, ...]:
        """Shape of one observed state."""
        return tuple(self._states.shape[2:])

    def subset(self, n: int) -> TrainingView:
        """The first ``n`` trajectories (sample-efficiency runs)."""
        validate_positive_int(n, "n_train")
        return TrainingView(self.header, self._states[: min(n, self.n_traj)])


class EvaluationView(TrainingView):
    """Observed states plus the full stored states and generating parameters."""

    __slots__ = ("_full_states", "_params")

    def __init__(self, header: DatasetHeader, states: np.ndarray, full_states: np.ndarray, params: np.ndarray) -> None:
        """Wrap the observed states, the stored states and the parameters."""
        super().__init__(header, states)
        self._full_states = full_states
        self._params = params

    @property
    def full_states(self) -> np.ndarray:
        """Every stored component, including unobserved ones."""
        return self._full_states

    @property
    def params(self) -> np.ndarray:
        """Generating parameters, shape ``(n_traj, n_params)``."""
        return self._params

    @property
    def theta(self) -> np.ndarray:
        """The parameters the physics model exposes, shape ``(n_traj, theta_dim)``."""
        return self._params[:, list(self.header.spec.theta_indices)]

    def subset(self, n: int) -> EvaluationView:
        """The first ``n`` trajectories."""
        validate_positive_int(n, "n")
        n = min(n, self.n_traj)
        return EvaluationView(self.header, self._states[:n], self._full_states[:n], self._params[:n])


class Dataset:
    """A decoded GBDS file handing out training and evaluation views."""

    def __init__(self, header: DatasetHeader, states: np.ndarray, params: np.ndarray) -> None:
        """Hold the stored ``states`` and ``params`` arrays."""
        self.header = header
        self._states = states
        self._params = params

    def _observed(self) -> np.ndarray:
        observed = self.header.spec.observed
        if observed is None:
            return self._states
        return self._states[:, :, list(observed)]

    def training_view(self) -> TrainingView:
        """States the learner may see."""
        return TrainingView(self.header, self._observed())

    def evaluation_view(self) -> EvaluationView:
        """States plus ground truth, for metrics only."""
        return EvaluationView(self.header, self._observed(), self._states, self._params)


# ----------------------------------------------------------------------
# File I/O
# ----------------------------------------------------------------------


def write_dataset(path: Path | str, header: DatasetHeader, states: np.ndarray, params: np.ndarray) -> Path:
    """Write a GBDS file atomically."""
    target = Path(path)
    encoded = json.dumps(header.to_json(), sort_keys=True).encode("utf-8")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(encoded)))
        fh.write(encoded)
        fh.write(np.ascontiguousarray(states, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(params, dtype="<f4").tobytes())
    os.replace(tmp, target)
    return target


def load_dataset(path: Path | str) -> Dataset:
    """Read and validate a GBDS file.

    Raises:
        DatasetFormatError: On a magic mismatch, unsupported version, bad
            header or a payload whose size disagrees with the header.
    """
    source = Path(path)
    raw = source.read_bytes()
    if len(raw) < _PREFIX.size:
        raise DatasetFormatError(source, "truncated header")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DatasetFormatError(source, f"magic mismatch ({magic!r})")
    if version != VERSION:
        raise DatasetFormatError(source, f"unsupported version {version}")
    start = _PREFIX.size
    if len(raw) < start + header_len:
        raise DatasetFormatError(source, "truncated header")
    try:
        decoded = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError(source, "header is not valid JSON") from e
    header = DatasetHeader.from_json(source, decoded)

    n_states = header.n_traj * header.traj_len * header.state_size
    n_params = header.n_traj * len(header.param_names)
    offset = start + header_len
    expected = offset + 4 * (n_states + n_params)
    if len(raw) < expected:
        raise DatasetFormatError(source, "truncated payload", details=f"expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise DatasetFormatError(source, f"{len(raw) - expected} trailing bytes after payload")

    states = np.frombuffer(raw, dtype="<f4", count=n_states, offset=offset)
    params = np.frombuffer(raw, dtype="<f4", count=n_params, offset=offset + 4 * n_states)
    states = states.reshape(header.n_traj, header.traj_len, *header.state_shape).astype(np.float32)
    params = params.reshape(header.n_traj, len(header.param_names)).astype(np.float32)
    logger.debug("Loaded %s: %d trajectories of %d points", source, header.n_traj, header.traj_len)
    return Dataset(header, states, params)


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------


def simulate_one(spec: SystemSpec, stream: Rng, index: int, n_points: int) -> Trajectory:
    """Simulate trajectory ``index``, resampling after a blow-up.

    Every attempt draws from its own child stream of ``stream.spawn(index)``,
    so the result depends only on the seed, split and index.

    Raises:
        SimulationError: After :data:`MAX_ATTEMPTS` failed attempts.
    """
    last_step = 0
    for attempt in range(MAX_ATTEMPTS):
        rng = stream.spawn(index).spawn(attempt)
        params = sample_params(spec, rng)
        x0 = sample_initial_state(spec, rng)
        try:
            return simulate(spec, params, x0, n_points, rng=rng)
        except SimulationError as e:
            logger.warning("Trajectory %d blew up at step %d (attempt %d); resampling", index, e.step, attempt + 1)
            last_step = e.step
    raise SimulationError(spec.name, last_step, details=f"trajectory {index} failed {MAX_ATTEMPTS} attempts")


def generate_dataset(  # noqa: PLR0913
    spec: SystemSpec,
    n_traj: int,
    seed: int,
    out: Path | str,
    *,
    split: str = "train",
    threads: int | None = None,
) -> Path:
    """Sample, simulate and write ``n_traj`` trajectories of ``spec``.

    Args:
        spec: The benchmark system.
        n_traj: Number of trajectories.
        seed: Generator seed; the split name selects an independent stream.
        out: Destination GBDS file.
        split: ``train`` or ``test`` (sets the trajectory length).
        threads: Worker threads; defaults to :func:`worker_threads`.

    Returns:
        The written path. Same arguments give a byte-identical file.
    """
    validate_positive_int(n_traj, "n_traj")
    n_points = spec.traj_len(split)
    stream = Rng(seed).stream("data").stream(split)
    workers = min(threads or worker_threads(), n_traj)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        trajectories = list(pool.map(lambda i: simulate_one(spec, stream, i, n_points), range(n_traj)))

    states = np.stack([t.states for t in trajectories])
    params = np.stack([t.true_params for t in trajectories if t.true_params is not None])
    header = DatasetHeader(
        system=spec.name,
        dt=spec.dt,
        n_traj=n_traj,
        traj_len=n_points,
        state_shape=spec.state_shape,
        param_names=spec.param_names,
        input_signal=spec.input_signal,
        generator_seed=seed,
    )
    target = write_dataset(out, header, states, params)
    logger.info("Wrote %s: %d %s trajectories of %d points", target, n_traj, spec.name, n_points)
    return target
