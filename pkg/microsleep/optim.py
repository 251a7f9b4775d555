"""
Nesterov-accelerated Adam with the Keras momentum schedule, and global-norm clipping.

Per parameter, at step t (starting at 1):

    mu_t      = beta1 * (1 - 0.5 * 0.96 ** (t * schedule_decay))
    mu_next   = beta1 * (1 - 0.5 * 0.96 ** ((t + 1) * schedule_decay))
    prod      = prod * mu_t                      (running product, starts at 1)
    g_hat     = g / (1 - prod)
    m         = beta1 * m + (1 - beta1) * g
    m_hat     = m / (1 - prod * mu_next)
    v         = beta2 * v + (1 - beta2) * g**2
    v_hat     = v / (1 - beta2 ** t)
    m_bar     = (1 - mu_t) * g_hat + mu_next * m_hat
    param    -= lr * m_bar / (sqrt(v_hat) + epsilon)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEARNING_RATE = 0.002
BETA_1 = 0.9
BETA_2 = 0.999
EPSILON = 1e-7
SCHEDULE_DECAY = 0.004


@dataclass
class OptimizerState:
    lr: float = LEARNING_RATE
    beta_1: float = BETA_1
    beta_2: float = BETA_2
    epsilon: float = EPSILON
    schedule_decay: float = SCHEDULE_DECAY
    t: int = 0
    m_schedule: float = 1.0
    m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def momentum(self, step: int) -> float:
        return self.beta_1 * (1.0 - 0.5 * 0.96 ** (step * self.schedule_decay))


def nadam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: OptimizerState) -> None:
    """Apply one update to `params` in place and advance `state`."""
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter {name!r}")
        if grad.shape != params[name].shape:
            raise ValueError(
                f"Gradient shape {grad.shape} does not match parameter {name!r} {params[name].shape}"
            )

    state.t += 1
    t = state.t
    mu_t = state.momentum(t)
    mu_next = state.momentum(t + 1)
    state.m_schedule *= mu_t
    m_schedule_next = state.m_schedule * mu_next
    v_correction = 1.0 - state.beta_2 ** t

    for name, grad in grads.items():
        param = params[name]
        g = grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(param.shape, dtype=np.float64)
            v = np.zeros(param.shape, dtype=np.float64)
        m = state.beta_1 * m + (1.0 - state.beta_1) * g
        v = state.beta_2 * v + (1.0 - state.beta_2) * g * g
        state.m[name] = m
        state.v[name] = v

        g_hat = g / (1.0 - state.m_schedule)
        m_hat = m / (1.0 - m_schedule_next)
        v_hat = v / v_correction
        m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat
        param -= (state.lr * m_bar / (np.sqrt(v_hat) + state.epsilon)).astype(param.dtype)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float = 1.0) -> dict[str, np.ndarray]:
    """Scale every gradient by max_norm / norm when the global L2 norm exceeds max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {name: (g * scale).astype(g.dtype) for name, g in grads.items()}
