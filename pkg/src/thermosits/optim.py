"""Adam with decoupled weight decay, and the cosine learning-rate schedule."""

import math

import numpy as np

__all__ = ["OptimizerState", "adam_step", "cosine_lr"]


class OptimizerState:
    """Per-parameter Adam moment accumulators plus hyperparameters.

    Moments start at zero and the step counter increases by one per update.
    """

    def __init__(self, param_shapes: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step = 0
        self.m = {name: np.zeros(shape) for name, shape in param_shapes.items()}
        self.v = {name: np.zeros(shape) for name, shape in param_shapes.items()}


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """One Adam update, in place on the parameter arrays.

    `params` maps names to autodiff Tensors (or bare ndarrays); `grads` maps
    a subset of the same names to gradient arrays. Weight decay is decoupled:
    p <- p - lr*wd*p happens before the moment update, so the decay never
    enters the adaptive scaling.
    """
    arrays = {name: (p.data if hasattr(p, "data") else p) for name, p in params.items()}
    for name in grads:
        if name not in arrays:
            raise ValueError(f"adam_step: gradient for unknown parameter {name!r}")
        if name not in state.m:
            raise ValueError(f"adam_step: no optimizer state for parameter {name!r}")
        if grads[name].shape != arrays[name].shape or state.m[name].shape != arrays[name].shape:
            raise ValueError(
                f"adam_step: shape mismatch for {name!r}: param {arrays[name].shape}, "
                f"grad {grads[name].shape}, state {state.m[name].shape}"
            )
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, g in grads.items():
        p = arrays[name]
        if state.weight_decay != 0.0:
            p -= lr * state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    state.step = t


def cosine_lr(epoch: int, total_epochs: int, base_lr: float) -> float:
    """Single-period cosine annealing from base_lr down to 0."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"cosine_lr: epoch {epoch} outside [0, {total_epochs})")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs))
