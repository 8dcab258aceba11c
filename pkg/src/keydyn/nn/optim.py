"""Adam with decoupled weight decay and a multi-step learning-rate schedule."""

from __future__ import annotations

from typing import Iterable

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


class AdamW:
    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, weight_decay=0.0,
                 betas=(0.9, 0.999), eps=1e-8, frozen: Iterable[str] = ()):
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.frozen = set(frozen)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Update every non-frozen parameter in place."""
        live = [k for k in self.params if k not in self.frozen]
        bad = [k for k in live if not np.all(np.isfinite(grads[k]))]
        if bad:
            raise NonFiniteGradient(f"non-finite gradient in {', '.join(bad)} at step {self.t + 1}")
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in live:
            p, g = self.params[k], grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if self.weight_decay:
                p *= 1 - self.lr * self.weight_decay
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class MultiStepLR:
    """lr(epoch) = base * gamma ** (number of milestones <= epoch)."""

    def __init__(self, optimizer: AdamW, milestones=(), gamma=0.1):
        ms = list(milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing")
        self.opt = optimizer
        self.base_lr = optimizer.lr
        self.milestones = ms
        self.gamma = gamma

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.gamma ** sum(m <= epoch for m in self.milestones)

    def set_epoch(self, epoch: int) -> float:
        self.opt.lr = self.lr_at(epoch)
        return self.opt.lr
