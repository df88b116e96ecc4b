"""Dense tensors, reverse-mode autodiff, random streams and optimizers."""

from gbdm.numkit.autograd import Gradients, backward
from gbdm.numkit.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gbdm.numkit.optim import AdamW, AdamWState, adamw_step, clip_grad_norm, cosine_lr
from gbdm.numkit.random import Rng, gaussian_sample
from gbdm.numkit.tensor import (
    TapeNode,
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    conv2d,
    no_grad,
    ones,
    parameter,
    precision,
    roll,
    silu,
    stack,
    zeros,
)


__all__ = [
    "AdamW",
    "AdamWState",
    "Checkpoint",
    "Gradients",
    "Rng",
    "TapeNode",
    "Tensor",
    "adamw_step",
    "as_tensor",
    "backward",
    "broadcast_to",
    "clip_grad_norm",
    "concat",
    "conv2d",
    "cosine_lr",
    "gaussian_sample",
    "load_checkpoint",
    "no_grad",
    "ones",
    "parameter",
    "precision",
    "roll",
    "save_checkpoint",
    "silu",
    "stack",
    "zeros",
]
