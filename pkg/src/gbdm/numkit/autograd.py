"""Reverse-mode traversal of the tape built by :mod:`gbdm.numkit.tensor`."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import NumericalError, ShapeError


if TYPE_CHECKING:
    from collections.abc import Iterable

    from gbdm.numkit.tensor import Tensor


logger = logging.getLogger(__name__)

Gradients = dict["Tensor", np.ndarray]


def _topological_order(root: Tensor) -> list[Tensor]:
    """Return every tensor reachable from ``root``, inputs before outputs.

    Iterative so that long recurrent graphs do not hit the recursion limit.
    """
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            stack.extend((parent, False) for parent in tensor.node.inputs if id(parent) not in visited)
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> Gradients:
    """Differentiate a scalar ``loss`` with respect to leaf tensors.

    Each tape node is visited exactly once, in reverse topological order;
    gradients reaching a tensor along several paths are summed.

    Args:
        loss: A single-element tensor produced with gradients enabled.
        params: Leaves to report. Leaves that do not reach ``loss`` get zero
            gradients. When omitted, every reachable trainable leaf is reported.

    Returns:
        Mapping from leaf tensor to its gradient array.

    Raises:
        ShapeError: If ``loss`` is not a scalar.
        NumericalError: If a non-finite gradient appears, naming the op.
    """
    if loss.size != 1:
        raise ShapeError("backward", "a scalar loss", loss.shape)

    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: list[Tensor] = []

    for tensor in reversed(order):
        g = grads.get(id(tensor))
        node = tensor.node
        if node is None:
            if tensor.requires_grad:
                leaves.append(tensor)
            continue
        if g is None:
            continue
        input_grads = node.backward(g)
        for parent, pg in zip(node.inputs, input_grads, strict=True):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericalError(node.op, "backward")
            pg = np.asarray(pg, dtype=parent.dtype)
            previous = grads.get(id(parent))
            grads[id(parent)] = pg if previous is None else previous + pg
        if tensor is not loss:
            del grads[id(tensor)]

    if params is None:
        return {leaf: grads[id(leaf)] for leaf in leaves if id(leaf) in grads}

    result: Gradients = {}
    for p in params:
        g = grads.get(id(p))
        result[p] = np.zeros_like(p.data) if g is None else g
    logger.debug("Backward pass over %d tape entries", len(order))
    return result
