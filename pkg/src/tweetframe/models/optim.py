"""Torch optimizer with the same update rule as ``mathops.adamw_step``."""

from __future__ import annotations

import torch
from torch.optim import Optimizer


class DecoupledAdamW(Optimizer):
    """Adam with decoupled weight decay.

    ``weight_decay`` is the raw lambda of the update
    ``theta -= eta * (lr * m' / (sqrt(v') + eps) + weight_decay * theta)``;
    it is *not* multiplied by ``lr`` (torch.optim.AdamW multiplies it).
    """

    def __init__(self, params, lr=3e-5, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, eta=1.0):
        if lr <= 0 or eps <= 0 or weight_decay < 0:
            raise ValueError("lr and eps must be > 0, weight_decay >= 0")
        if not all(0 <= b < 1 for b in betas):
            raise ValueError("betas must lie in [0, 1)")
        super().__init__(params, dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay, eta=eta))

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr, eps, lam, eta = group["lr"], group["eps"], group["weight_decay"], group["eta"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                g = p.grad
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["m"] = torch.zeros_like(p)
                    state["v"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                m, v = state["m"], state["v"]
                m.mul_(beta1).add_(g, alpha=1 - beta1)
                v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
                m_hat = m / (1 - beta1**t)
                v_hat = v / (1 - beta2**t)
                update = lr * m_hat / (v_hat.sqrt() + eps)
                if lam:
                    update = update + lam * p
                p.sub_(eta * update)
        return loss
