"""Adam with decoupled weight decay, matching BERT fine-tuning practice."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


def decays_weight(name: str) -> bool:
    """Weight decay skips biases and layernorm scale/shift parameters."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf not in ("bias", "gamma", "beta")


@dataclass
class AdamState:
    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.01
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(state: AdamState, store, grads: dict) -> None:
    """One bias-corrected Adam step over the store's trainable parameters.

    `grads` must cover exactly the trainable parameter set; frozen tensors
    are never touched.
    """
    trainable = set(store.trainable_names())
    if set(grads) != trainable:
        missing = trainable - set(grads)
        extra = set(grads) - trainable
        raise ShapeError(f"grads/trainable mismatch (missing={sorted(missing)[:3]}, "
                         f"extra={sorted(extra)[:3]})")
    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name in sorted(grads):
        g = grads[name]
        p = store[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape "
                             f"{p.data.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        step = mhat / (np.sqrt(vhat) + state.eps)
        if state.weight_decay and decays_weight(name):
            step = step + state.weight_decay * p.data
        p.data = (p.data - state.lr * step).astype(np.float32)
