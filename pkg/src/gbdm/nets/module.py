"""Parameter containers for the learnable components."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import CheckpointError
from gbdm.numkit.tensor import Tensor


if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping


class Module:
    """Base class collecting trainable tensors from attributes.

    Parameters are discovered in attribute definition order, recursing into
    sub-modules and lists of sub-modules, so names and ordering are stable
    across processes (checkpoint layout depends on it).
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Yield ``(dotted_name, tensor)`` for every trainable leaf."""
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        """Trainable leaves in a stable order."""
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of all parameter arrays keyed by dotted name."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameters from ``arrays``.

        Raises:
            CheckpointError: If a parameter is missing or has a different shape.
        """
        for name, p in self.named_parameters():
            if name not in arrays:
                raise CheckpointError("<state>", f"missing parameter '{name}'")
            value = np.asarray(arrays[name])
            if value.shape != p.shape:
                raise CheckpointError("<state>", f"shape mismatch for '{name}': {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def num_parameters(self) -> int:
        """Total number of trainable scalars."""
        return sum(p.size for p in self.parameters())
