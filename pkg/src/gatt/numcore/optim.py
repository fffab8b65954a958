"""Adadelta and global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from gatt.numcore.params import ParamStore

ADADELTA_RHO = 0.95
ADADELTA_EPS = 1e-6


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adadelta_step(store: ParamStore, rho: float = ADADELTA_RHO, eps: float = ADADELTA_EPS) -> None:
    """One Adadelta update from the accumulated gradients, then zero them.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    delta  = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
    """
    for name, value in store.values.items():
        g = store.grads[name]
        eg = store.acc_grad[name]
        ed = store.acc_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        value += delta
        g.fill(0.0)
