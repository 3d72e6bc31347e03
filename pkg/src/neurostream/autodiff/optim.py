"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import OptimizerError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray] | None,
    state: AdamState,
) -> tuple[Mapping[str, Tensor], AdamState]:
    """One Adam update, in place on ``params``.

    ``grads`` defaults to each parameter's ``.grad``; a missing gradient
    counts as zero. Raises before touching anything if a gradient is non-finite.
    """
    gs = {}
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise OptimizerError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter {name!r}")
        gs[name] = g

    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = gs[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
