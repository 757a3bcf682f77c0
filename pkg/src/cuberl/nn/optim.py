"""Adam with bias correction, operating on named parameter dicts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], st: OptimizerState) -> None:
    """One in-place Adam update.  Parameters without a gradient are left alone."""
    st.step += 1
    c1 = 1.0 - st.beta1**st.step
    c2 = 1.0 - st.beta2**st.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name not in st.m:
            st.m[name] = np.zeros_like(p.data)
            st.v[name] = np.zeros_like(p.data)
        m, v = st.m[name], st.v[name]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        p.data -= (st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)).astype(p.dtype)


class Adam:
    """Convenience wrapper binding a module's parameters to an optimizer state."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, **kw):
        self.params = params
        self.state = OptimizerState(lr=lr, **kw)

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
