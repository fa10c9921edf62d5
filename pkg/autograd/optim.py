"""AdamW with decoupled weight decay"""

import logging
from typing import Dict, Tuple

import numpy as np

from autograd.nn import Module

logger = logging.getLogger(__name__)


class AdamW:
    def __init__(
        self,
        module: Module,
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.named = list(module.named_parameters())
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.named}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.named}

    def zero_grad(self):
        for _, p in self.named:
            p.grad = None

    def step(self):
        self.step_count += 1
        beta1, beta2 = self.betas
        bias1 = 1 - beta1**self.step_count
        bias2 = 1 - beta2**self.step_count
        for name, p in self.named:
            if p.grad is None:
                continue
            g = p.grad.astype(p.dtype)
            p.data = p.data * (1 - self.lr * self.weight_decay)
            self.m[name] = beta1 * self.m[name] + (1 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1 - beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = (p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state_dict(self) -> Dict[str, object]:
        tensors = {}
        for name, _ in self.named:
            tensors[f"m.{name}"] = self.m[name]
            tensors[f"v.{name}"] = self.v[name]
        return {"step": self.step_count, "tensors": tensors}

    def load_state_dict(self, state: Dict[str, object]):
        self.step_count = int(state["step"])
        tensors = state["tensors"]
        for name, p in self.named:
            self.m[name] = np.asarray(tensors[f"m.{name}"], dtype=p.dtype).reshape(p.shape)
            self.v[name] = np.asarray(tensors[f"v.{name}"], dtype=p.dtype).reshape(p.shape)
