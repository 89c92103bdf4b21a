"""Parameter updates: plain SGD (for the virtual lookahead step) and Adam."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def virtual_sgd(params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float) -> dict[str, Tensor]:
    """One SGD step as *new* leaf tensors; the originals are untouched.

    This is the one-step lookahead w' = w - lr * g used when scoring the
    weighting net. Missing gradients count as zero.
    """
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = Tensor(p.data.copy())
        else:
            out[name] = Tensor(p.data - lr * g)
    return out


class AdamState:
    """Standard bias-corrected Adam over a named parameter group.

    Updates mutate the parameter tensors in place so tapes built on the
    same leaves in later steps see the new values.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
