"""Counter-based random streams and reparameterized Gaussian sampling.

Streams are Philox generators keyed by a ``SeedSequence`` built from the run
seed and a path of stream codes, so ``Rng(seed).stream("data").spawn(step)``
always yields the same draws and adding draws to one stream never perturbs
another.
"""

from __future__ import annotations

import zlib
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import ValidationError
from gbdm.numkit.tensor import as_tensor, default_dtype


if TYPE_CHECKING:
    from collections.abc import Sequence

    from gbdm.numkit.tensor import Tensor


_MAX_SEED = 2**64 - 1


def stream_code(name: str) -> int:
    """Stable 32-bit code for a stream name (``hash`` is salted per process)."""
    return zlib.crc32(name.encode("utf-8"))


class Rng:
    """A deterministic random stream identified by ``(seed, path)``.

    Attributes:
        seed: The 64-bit run seed.
        path: Stream codes and indices leading to this stream.
    """

    def __init__(self, seed: int, path: Sequence[int] = ()) -> None:
        """Create the stream for ``seed`` and ``path``.

        Raises:
            ValidationError: If the seed is not an unsigned 64-bit integer.
        """
        if isinstance(seed, bool) or not isinstance(seed, int | np.integer) or not 0 <= int(seed) <= _MAX_SEED:
            raise ValidationError(field="seed", value=seed, reason="must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        """Return the stream identity."""
        return f"Rng(seed={self.seed}, path={self.path})"

    def stream(self, name: str) -> Rng:
        """Return the independent child stream called ``name``."""
        return Rng(self.seed, (*self.path, stream_code(name)))

    def spawn(self, index: int) -> Rng:
        """Return the independent child stream number ``index``."""
        return Rng(self.seed, (*self.path, int(index)))

    def normal(self, shape: Sequence[int] | int) -> np.ndarray:
        """Standard normal draws in the default dtype."""
        return self._generator.standard_normal(shape).astype(default_dtype())

    def uniform(self, shape: Sequence[int] | int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform draws on ``[low, high)`` in the default dtype."""
        return self._generator.uniform(low, high, shape).astype(default_dtype())

    def uniform64(self, shape: Sequence[int] | int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Uniform draws in float64 (simulator inputs)."""
        return self._generator.uniform(low, high, shape)

    def normal64(self, shape: Sequence[int] | int) -> np.ndarray:
        """Standard normal draws in float64 (simulator inputs)."""
        return self._generator.standard_normal(shape)

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        """Integers on ``[low, high)``."""
        return self._generator.integers(low, high, size=size)

    def choice(self, options: Sequence[float]) -> float:
        """Pick one of ``options`` uniformly."""
        return float(options[int(self._generator.integers(0, len(options)))])


def gaussian_sample(
    mu: Tensor,
    sigma: Tensor,
    rng: Rng | None = None,
    *,
    noise: np.ndarray | None = None,
) -> Tensor:
    """Reparameterized draw ``mu + sigma * eps`` with ``eps ~ N(0, I)``.

    Args:
        mu: Mean tensor.
        sigma: Standard deviation tensor, broadcastable to ``mu``.
        rng: Stream to draw ``eps`` from.
        noise: A fixed ``eps`` (frozen-noise gradient checks); overrides ``rng``.

    Returns:
        A tensor differentiable with respect to ``mu`` and ``sigma``.

    Raises:
        ValidationError: If any ``sigma`` is negative or no noise source is given.
    """
    if np.any(sigma.data < 0):
        raise ValidationError(field="sigma", value=float(sigma.data.min()), reason="must be non-negative")
    if noise is None:
        if rng is None:
            raise ValidationError(field="rng", value=None, reason="a random stream or explicit noise is required")
        noise = rng.normal(mu.shape)
    eps = as_tensor(np.asarray(noise, dtype=mu.dtype), like=mu)
    return mu + sigma * eps
