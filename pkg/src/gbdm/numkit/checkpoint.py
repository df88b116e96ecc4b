"""GBCK checkpoint files.

Layout: ``b"GBCK"``, u32 little-endian format version, u64 little-endian
header length, UTF-8 JSON header, then each array as little-endian float32
in header order. The header lists ``names`` and ``shapes`` plus whatever
metadata the caller adds (optimizer hyperparameters, step counter, config).
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from gbdm.exceptions import CheckpointError


if TYPE_CHECKING:
    from collections.abc import Mapping


logger = logging.getLogger(__name__)

MAGIC = b"GBCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    """Decoded checkpoint: JSON header plus named float32 arrays."""

    header: dict[str, Any]
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def step(self) -> int:
        """Optimizer step the checkpoint was taken at."""
        return int(self.header.get("step", 0))


def save_checkpoint(path: Path | str, arrays: Mapping[str, np.ndarray], header: Mapping[str, Any]) -> Path:
    """Write ``arrays`` and ``header`` atomically to ``path``.

    Raises:
        CheckpointError: If the header collides with the reserved keys.
    """
    target = Path(path)
    if "names" in header or "shapes" in header:
        raise CheckpointError(target, "header keys 'names' and 'shapes' are reserved")
    names = list(arrays)
    full_header = {
        **header,
        "names": names,
        "shapes": [list(np.shape(arrays[n])) for n in names],
    }
    encoded = json.dumps(full_header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes() for n in names)

    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(encoded)))
        fh.write(encoded)
        fh.write(payload)
    os.replace(tmp, target)
    logger.debug("Wrote checkpoint %s (%d arrays)", target, len(names))
    return target


def load_checkpoint(path: Path | str) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: On a bad magic, unsupported version, a header without
            array names and shapes, or a truncated payload.
    """
    source = Path(path)
    raw = source.read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(source, "truncated header")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(source, f"magic mismatch ({magic!r})")
    if version != VERSION:
        raise CheckpointError(source, f"unsupported version {version}")
    start = _PREFIX.size
    if len(raw) < start + header_len:
        raise CheckpointError(source, "truncated header")
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(source, "header is not valid JSON") from e
    listed = isinstance(header, dict) and all(isinstance(header.get(k), list) for k in ("names", "shapes"))
    if not listed:
        raise CheckpointError(source, "header missing names/shapes")
    if len(header["names"]) != len(header["shapes"]):
        raise CheckpointError(source, "header names and shapes differ in length")

    offset = start + header_len
    arrays: dict[str, np.ndarray] = {}
    for name, shape in zip(header["names"], header["shapes"], strict=True):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(source, "truncated payload", details=f"array '{name}'")
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset = end
    if offset != len(raw):
        raise CheckpointError(source, f"{len(raw) - offset} trailing bytes after payload")
    return Checkpoint(header=header, arrays=arrays)
