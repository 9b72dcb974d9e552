"""Central-difference gradient verification."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from synthlab.engine.tensor import Tensor
from synthlab.errors import NumericError


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6) -> float:
    """Max relative error between backprop and central differences over every coordinate.

    ``f`` is re-evaluated with each parameter coordinate nudged by ``±eps``;
    it must read the parameters afresh on each call.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    for p in params:
        if not np.isfinite(p.data).all():
            raise NumericError("grad_check: non-finite parameter")
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            if not np.isfinite(numeric):
                raise NumericError("grad_check: non-finite finite-difference estimate")
            ana = a.reshape(-1)[i]
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
