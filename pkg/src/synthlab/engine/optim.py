"""Adam with bias correction and a linear-warmup cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from synthlab.engine.tensor import Tensor
from synthlab.errors import NumericError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        state.first = [np.zeros_like(p.data) for p in params]
        state.second = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], state: AdamState, lr: float) -> None:
    """Apply one bias-corrected Adam update in place and advance ``state.step``.

    Parameters whose ``grad`` is None are treated as having zero gradient.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if not state.first:
        state.first = [np.zeros_like(p.data) for p in params]
        state.second = [np.zeros_like(p.data) for p in params]
    if len(state.first) != len(params):
        raise ValueError("Adam state was built for a different parameter list")
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    for p, g in zip(params, grads):
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {p.name or '?'}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first[i]
        v = state.second[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr == 0.0:
            continue
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need 0 <= warmup_steps <= total_steps")
        if self.base_lr < 0:
            raise ValueError("base_lr must be non-negative")

    @classmethod
    def half_epoch_warmup(cls, base_lr: float, steps_per_epoch: int, epochs: int) -> "LrSchedule":
        return cls(base_lr, math.ceil(steps_per_epoch / 2), steps_per_epoch * epochs)


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear ramp from 0 over the warmup, then cosine decay to 0 at ``total_steps``."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    warm = schedule.warmup_steps
    if step < warm:
        return schedule.base_lr * step / warm
    span = schedule.total_steps - warm
    if span == 0:
        return schedule.base_lr
    progress = (step - warm) / span
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
