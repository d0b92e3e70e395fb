"""AdamW with a linear-warmup / cosine-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import BadSchedule

__all__ = ["warmup_cosine_lr", "AdamW"]


def warmup_cosine_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Learning rate at ``step`` (0-based).

    Linear ramp ``base_lr * step / warmup_steps`` while ``step < warmup_steps``,
    then cosine decay ``base_lr * 0.5 * (1 + cos(pi * progress))`` where
    progress runs 0 -> 1 over the remaining steps.
    """
    if total_steps <= 0:
        raise BadSchedule(f"total_steps must be positive, got {total_steps}")
    if warmup_steps < 0 or warmup_steps > total_steps:
        raise BadSchedule(f"warmup {warmup_steps} outside [0, {total_steps}]")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min((step - warmup_steps) / span, 1.0)
    return base_lr * 0.5 * (1.0 + float(np.cos(np.pi * progress)))


class AdamW:
    """Decoupled weight decay Adam over a name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], base_lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, decay_exempt=()):
        self.params = params
        self.base_lr = float(base_lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.decay_exempt = frozenset(decay_exempt)
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """One update using gradients currently stored on the parameters.

        Parameters with ``grad is None`` are treated as zero-gradient (they
        still receive weight decay, matching the decoupled formulation).
        """
        self.t += 1
        lr = self.base_lr if lr is None else float(lr)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[key]
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            wd = 0.0 if key in self.decay_exempt else self.weight_decay
            p.data = p.data - lr * (update + wd * p.data)
