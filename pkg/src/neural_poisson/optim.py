"""Adam with a cosine-annealed step size, and a BLAS thread guard."""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Schedule:
    """Step count and cosine-annealed Adam rate shared by the training loops."""

    steps: int = 2000
    lr: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 50

    def rate(self, step: int) -> float:
        if self.steps <= 1:
            return self.lr
        t = min(step, self.steps - 1) / (self.steps - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math.cos(math.pi * t))


class Adam:
    def __init__(self, params: list[np.ndarray], schedule: Schedule, lr_scale: list[float] | None = None):
        self.schedule = schedule
        self.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.lr_scale = lr_scale or [1.0] * len(params)
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], masks: list | None = None) -> None:
        """In-place update.  ``masks`` (bool arrays or None) freeze entries."""
        s = self.schedule
        self.t += 1
        lr = s.rate(self.t - 1)
        c1 = 1.0 - s.beta1**self.t
        c2 = 1.0 - s.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            g = np.asarray(g, dtype=np.float64)
            m, v = self.m[i], self.v[i]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            upd = (lr * self.lr_scale[i]) * (m / c1) / (np.sqrt(v / c2) + s.eps)
            if masks is not None and masks[i] is not None:
                sel = masks[i]
                p[sel] = (p[sel] - upd[sel]).astype(p.dtype)
            else:
                p -= upd.astype(p.dtype)


@contextlib.contextmanager
def deterministic_threads(enabled: bool = True):
    """Pin BLAS to one thread so reductions run in a fixed order."""
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
        yield
        return
    with threadpool_limits(limits=1):
        yield
