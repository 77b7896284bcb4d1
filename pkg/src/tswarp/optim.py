"""Adam with bias correction, plus gradient bookkeeping helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter

__all__ = ["AdamState", "OptimizerError", "adam_step", "zero_grads"]


class OptimizerError(RuntimeError):
    pass


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update over ``params`` with matching ``grads``.

    A non-finite gradient aborts before any parameter is touched, naming
    the offending parameter.
    """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ValueError("adam_step: params and grads lengths differ")
    for p, g in zip(params, grads):
        if g is None:
            raise OptimizerError(f"missing gradient for parameter {p.name!r}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter {p.name!r}")
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{p.name!r} shape {p.data.shape}"
            )
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g in zip(params, grads):
        key = p.name if isinstance(p, Parameter) else str(id(p))
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[key] = m
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
