"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from aufuse.tensor import Tensor


class Adam:
    """Bias-corrected adaptive moment estimation.

    The paper never names an optimizer; Adam with standard defaults is
    the project choice for these small multimodal nets.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if isinstance(params, dict):
            params = list(params.items())
        normalized = []
        for i, entry in enumerate(params):
            if isinstance(entry, Tensor):
                normalized.append((f"param{i}", entry))
            else:
                normalized.append((str(entry[0]), entry[1]))
        self.params = normalized
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad_()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params:
            m = self.m[name]
            v = self.v[name]
            if m.shape != p.data.shape:
                raise ValueError(
                    f"optimizer state for '{name}' has shape {m.shape}, "
                    f"parameter has {p.data.shape}"
                )
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                p.data.dtype, copy=False
            )
