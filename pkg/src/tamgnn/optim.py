"""Adam with decoupled weight decay and plateau-halving LR scheduling."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    """Adam over a fixed parameter list.

    Weight decay is decoupled: after the moment-scaled step, non-exempt
    parameters additionally shrink by lr * weight_decay * theta. Parameters
    listed in skip_decay (matched by identity) are exempt.
    """

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        skip_decay: list[Tensor] | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        skip_ids = {id(p) for p in (skip_decay or [])}
        self.decay_mask = [id(p) not in skip_ids for p in self.params]
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        bias1 = 1.0 - self.beta1**self.step_count
        bias2 = 1.0 - self.beta2**self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay and self.decay_mask[i]:
                p.data -= self.lr * self.weight_decay * p.data

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class PlateauHalving:
    """Halve the learning rate when the best validation loss goes stale.

    update() is called once per epoch with that epoch's validation loss and
    returns the rate to use next. The staleness counter resets both on
    improvement and on halving.
    """

    def __init__(self, lr: float, patience: int = 100):
        self.lr = lr
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def update(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
        if self.stale >= self.patience:
            self.lr /= 2.0
            self.stale = 0
        return self.lr


def replay_schedule(lr0: float, val_loss_history, patience: int = 100) -> float:
    """Learning rate implied by a full validation-loss history."""
    sched = PlateauHalving(lr0, patience)
    lr = sched.lr
    for loss in val_loss_history:
        lr = sched.update(loss)
    return lr
