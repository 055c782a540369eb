"""SGD, momentum SGD and Adam as pure update rules over named parameter dicts."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError

OPTIMIZERS = ("sgd", "momentum", "adam")


def optimizer_step(params: dict, grads: dict, state: dict, config) -> tuple[dict, dict]:
    """Return updated parameters and optimizer state; inputs are not mutated.

    ``config`` needs ``optimizer`` and ``learning_rate`` plus ``momentum`` or
    ``beta1``/``beta2``/``epsilon`` for the corresponding rule.
    """
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {key}")
    lr = config.learning_rate
    kind = config.optimizer
    new_params, new_state = {}, dict(state)
    if kind == "sgd":
        for key, p in params.items():
            new_params[key] = (p - lr * grads[key]).astype(p.dtype, copy=False)
    elif kind == "momentum":
        beta = config.momentum
        for key, p in params.items():
            v = beta * state.get(("v", key), 0) + grads[key]
            new_state[("v", key)] = v
            new_params[key] = (p - lr * v).astype(p.dtype, copy=False)
    elif kind == "adam":
        b1, b2, eps = config.beta1, config.beta2, config.epsilon
        t = state.get("t", 0) + 1
        new_state["t"] = t
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for key, p in params.items():
            g = grads[key]
            m = b1 * state.get(("m", key), 0) + (1 - b1) * g
            v = b2 * state.get(("v", key), 0) + (1 - b2) * (g * g)
            new_state[("m", key)] = m
            new_state[("v", key)] = v
            step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            new_params[key] = (p - step).astype(p.dtype, copy=False)
    else:
        raise ValueError(f"unknown optimizer {kind!r}")
    return new_params, new_state


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total <= max_norm or total == 0:
        return grads
    scale = max_norm / total
    return {k: (g * scale).astype(g.dtype, copy=False) for k, g in grads.items()}
