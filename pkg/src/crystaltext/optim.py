"""AdamW with decoupled weight decay and bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamWState:
    config: AdamWConfig
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    scratch: dict[str, tuple] = field(default_factory=dict)


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamWState,
) -> AdamWState:
    """One update: moment tracking, bias correction, then decoupled decay.

    Parameters are updated in place; the state is mutated and returned.
    Scratch buffers avoid reallocating embedding-table-sized temporaries;
    the arithmetic is the textbook sequence
        m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g g
        p <- p - lr * (m/bc1) / (sqrt(v/bc2) + eps);  p <- p - lr wd p
    """
    cfg = state.config
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.data.shape:
            raise ShapeMismatch(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} of shape {param.data.shape}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
            state.scratch[name] = (np.empty_like(param.data), np.empty_like(param.data))
        m = state.m[name]
        v = state.v[name]
        buf_a, buf_b = state.scratch[name]
        m *= cfg.beta1
        np.multiply(grad, 1.0 - cfg.beta1, out=buf_a)
        m += buf_a
        v *= cfg.beta2
        np.multiply(grad, 1.0 - cfg.beta2, out=buf_a)
        buf_a *= grad
        v += buf_a
        np.divide(m, bc1, out=buf_a)           # m_hat
        np.divide(v, bc2, out=buf_b)           # v_hat
        np.sqrt(buf_b, out=buf_b)
        buf_b += cfg.eps
        buf_a /= buf_b
        buf_a *= cfg.lr
        param.data -= buf_a
        if cfg.weight_decay:
            param.data -= cfg.lr * cfg.weight_decay * param.data
    return state


class AdamW:
    """Convenience wrapper that reads gradients off the parameter tensors."""

    def __init__(self, params: dict[str, Tensor], config: AdamWConfig):
        self.params = params
        self.state = AdamWState(config=config)

    def step(self, grads: dict[str, np.ndarray] | None = None):
        if grads is None:
            grads = {
                name: p.grad for name, p in self.params.items() if p.grad is not None
            }
        adamw_step(self.params, grads, self.state)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
