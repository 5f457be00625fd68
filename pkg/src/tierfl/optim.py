"""Flat-vector optimizers. Each node keeps one instance per hosted segment."""
from __future__ import annotations

import numpy as np

from .errors import ContractError


class Sgd:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.lr = lr

    def step(self, flat: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if flat.shape != grad.shape:
            raise ContractError(f"gradient shape {grad.shape} does not match params {flat.shape}")
        return flat - self.lr * grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ContractError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ContractError("eps must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, flat: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if flat.shape != grad.shape:
            raise ContractError(f"gradient shape {grad.shape} does not match params {flat.shape}")
        if self.m is None:
            self.m = np.zeros_like(flat)
            self.v = np.zeros_like(flat)
        elif self.m.shape != flat.shape:
            raise ContractError("optimizer state was created for a different parameter size")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return flat - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


Optimizer = Sgd | Adam
