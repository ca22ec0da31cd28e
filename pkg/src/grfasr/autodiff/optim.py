"""Adam with the Noam warmup/decay learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np


def noam_lr(step, factor, model_dim, warmup):
    """factor * model_dim^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ValueError("schedule is defined for step >= 1")
    return factor * model_dim ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class OptimizerState:
    base_factor: float = 0.5
    warmup_steps: int = 8000
    model_dim: int = 512
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @property
    def lr(self):
        return noam_lr(max(self.step, 1), self.base_factor, self.model_dim, self.warmup_steps)


def clip_grad_norm(params, max_norm):
    """Scale all grads in place so their global L2 norm is <= max_norm; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params if p.grad is not None)))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


def adam_noam_step(state, params):
    """One Adam update at the Noam learning rate; returns the rate used.

    Grads are left in place (the caller zeroes them).
    """
    params = [p for p in params if getattr(p, "trainable", True)]
    missing = [getattr(p, "name", "?") for p in params if p.grad is None]
    if missing:
        raise ValueError(f"parameters without gradients: {', '.join(missing[:5])}")
    state.step += 1
    t = state.step
    lr = noam_lr(t, state.base_factor, state.model_dim, state.warmup_steps)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        key = id(p)
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return lr
