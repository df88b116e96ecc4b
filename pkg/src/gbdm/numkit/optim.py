"""AdamW with decoupled weight decay, cosine annealing and norm clipping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from gbdm.exceptions import NumericalError, ShapeError, ValidationError
from gbdm.validators import validate_non_negative, validate_positive_float


if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from gbdm.numkit.tensor import Tensor


logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    """First/second moment accumulators (one per parameter) and the step count."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> AdamWState:
        """Fresh state for parameters of the given shapes."""
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], step=0)


def adamw_step(  # noqa: PLR0913
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], AdamWState]:
    """Apply one AdamW update.

    Weight decay is decoupled: ``w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)``
    with the decay term using the pre-update weights.

    Returns:
        The updated parameter arrays and the new state. Inputs are not modified.

    Raises:
        ValidationError: If ``lr`` is not positive or a hyperparameter is out of range.
        ShapeError: If parameter, gradient and state shapes disagree.
        NumericalError: If a gradient is not finite.
    """
    validate_positive_float(lr, "lr")
    validate_non_negative(weight_decay, "weight_decay")
    for name, beta in (("beta1", beta1), ("beta2", beta2)):
        if not 0.0 <= beta < 1.0:
            raise ValidationError(field=name, value=beta, reason="must lie in [0, 1)")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("adamw_step", f"{len(params)} parameters", (len(grads), len(state.m), len(state.v)))

    step = state.step + 1
    bias1 = 1.0 - beta1**step
    bias2 = 1.0 - beta2**step
    new_params: list[np.ndarray] = []
    new_m: list[np.ndarray] = []
    new_v: list[np.ndarray] = []
    for i, (w, g, m, v) in enumerate(zip(params, grads, state.m, state.v, strict=True)):
        if not (w.shape == g.shape == m.shape == v.shape):
            raise ShapeError("adamw_step", w.shape, (g.shape, m.shape, v.shape), details=f"parameter index {i}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("adamw_step", "backward", details=f"gradient of parameter index {i}")
        m_next = beta1 * m + (1.0 - beta1) * g
        v_next = beta2 * v + (1.0 - beta2) * (g * g)
        update = (m_next / bias1) / (np.sqrt(v_next / bias2) + eps) + weight_decay * w
        new_params.append((w - lr * update).astype(w.dtype, copy=False))
        new_m.append(m_next.astype(w.dtype, copy=False))
        new_v.append(v_next.astype(w.dtype, copy=False))
    return new_params, AdamWState(m=new_m, v=new_v, step=step)


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    """Cosine-annealed learning rate.

    Examples:
        >>> cosine_lr(0, 100, 1e-3)
        0.001
        >>> cosine_lr(100, 100, 1e-3, 1e-5)
        1e-05
    """
    if total_steps < 1:
        raise ValidationError(field="total_steps", value=total_steps, reason="must be at least 1")
    if not 0 <= step <= total_steps:
        raise ValidationError(field="step", value=step, reason=f"must lie in [0, {total_steps}]")
    if step == total_steps:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale gradients so their global L2 norm is at most ``max_norm``.

    Returns:
        The (possibly rescaled) gradients and the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
    if max_norm <= 0 or total <= max_norm:
        return list(grads), total
    scale = max_norm / (total + 1e-12)
    return [(g * scale).astype(g.dtype, copy=False) for g in grads], total


class AdamW:
    """Stateful wrapper binding :func:`adamw_step` to a list of parameter tensors.

    Attributes:
        params: The trainable leaves, updated by rebinding their ``data``.
        state: Moment accumulators and step count.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        *,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 5e-7,
    ) -> None:
        """Create the optimizer with zeroed moments."""
        self.params = list(params)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState.zeros_like([p.data for p in self.params])

    def hyperparameters(self) -> dict[str, float]:
        """Hyperparameters recorded in checkpoints."""
        return {"beta1": self.betas[0], "beta2": self.betas[1], "eps": self.eps, "weight_decay": self.weight_decay}

    def step(self, grads: Mapping[Tensor, np.ndarray], lr: float) -> None:
        """Update every parameter from ``grads`` (missing entries count as zero)."""
        ordered = [grads.get(p, np.zeros_like(p.data)) for p in self.params]
        new_params, self.state = adamw_step(
            [p.data for p in self.params],
            ordered,
            self.state,
            lr,
            self.betas[0],
            self.betas[1],
            self.eps,
            self.weight_decay,
        )
        for p, data in zip(self.params, new_params, strict=True):
            p.data = data
