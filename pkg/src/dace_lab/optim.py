"""Minimal Adam for numpy parameter arrays (gradient ascent)."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam that *ascends* the supplied gradient.

    State arrays may grow (``grow``) when new parameter rows appear, which the
    tabular policy needs as it touches new contexts.
    """

    def __init__(self, shape, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def grow(self, n_rows: int) -> None:
        extra = n_rows - self.m.shape[0]
        if extra > 0:
            pad = np.zeros((extra,) + self.m.shape[1:])
            self.m = np.concatenate([self.m, pad])
            self.v = np.concatenate([self.v, pad])

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Return the additive parameter update for ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
