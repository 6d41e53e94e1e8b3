"""Bias-corrected Adam over a flat name→Tensor parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericFault


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params, grads, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9):
    """One in-place Adam step; returns (params, state) for chaining."""
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractError(f"gradients missing for {missing[:3]}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name in sorted(params):
        p = params[name]
        g = np.asarray(grads[name], dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ContractError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.all(np.isfinite(step)):
            raise NumericFault(f"non-finite Adam step for {name!r}")
        p.data -= step
    return params, state
