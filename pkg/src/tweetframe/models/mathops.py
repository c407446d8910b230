"""Numpy reference math for the classifier: softmax, cross-entropy, AdamW, head gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


def softmax(y: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-shifted so large scores cannot overflow."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("softmax requires finite scores")
    z = np.exp(y - y.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def cross_entropy(p: np.ndarray, t: int) -> float:
    """-log p_t for category code t in {1,2,3}, with p_t floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    if t not in (1, 2, 3):
        raise ValueError(f"category must be 1, 2 or 3, got {t}")
    return float(-np.log(max(p[t - 1], PROB_FLOOR)))


@dataclass(frozen=True)
class OptimizerHyper:
    alpha: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0  # lambda, applied as theta * lambda (not scaled by alpha)
    eta: float = 1.0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.alpha <= 0 or self.epsilon <= 0 or self.weight_decay < 0:
            raise ValueError("alpha and epsilon must be > 0, weight_decay >= 0")


@dataclass(frozen=True)
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, theta: np.ndarray) -> "OptimizerState":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(np.zeros_like(theta), np.zeros_like(theta), 0)

    def corrected(self, h: OptimizerHyper) -> tuple[np.ndarray, np.ndarray]:
        """Bias-corrected moments (m', v')."""
        if self.step == 0:
            return np.zeros_like(self.m), np.zeros_like(self.v)
        return self.m / (1 - h.beta1**self.step), self.v / (1 - h.beta2**self.step)


def adamw_step(
    theta: np.ndarray, g: np.ndarray, state: OptimizerState, h: OptimizerHyper
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam update.

    theta' = theta - eta * (alpha * m' / (sqrt(v') + eps) + lambda * theta)

    The decay term uses the pre-update theta and never enters the moments.
    """
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape or state.m.shape != theta.shape or state.v.shape != theta.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape}, g {g.shape}, m {state.m.shape}, v {state.v.shape}")
    m = h.beta1 * state.m + (1 - h.beta1) * g
    v = h.beta2 * state.v + (1 - h.beta2) * g * g
    new_state = OptimizerState(m, v, state.step + 1)
    m_hat, v_hat = new_state.corrected(h)
    update = h.alpha * m_hat / (np.sqrt(v_hat) + h.epsilon) + h.weight_decay * theta
    return theta - h.eta * update, new_state


def head_scores(w: np.ndarray, b: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Linear head: scores = W h + b, W of shape (3, d)."""
    return np.asarray(w) @ np.asarray(h) + np.asarray(b)


def head_loss_and_grad(
    w: np.ndarray, b: np.ndarray, h: np.ndarray, t: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy of softmax(W h + b) and its gradients w.r.t. W and b.

    dL/dy = p - q, so dL/dW = (p - q) h^T and dL/db = p - q.
    """
    p = softmax(head_scores(w, b, h))
    q = np.zeros_like(p)
    q[t - 1] = 1.0
    delta = p - q
    return cross_entropy(p, t), np.outer(delta, h), delta
