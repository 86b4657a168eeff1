"""RMSprop and Adadelta with Keras-style time-based learning-rate decay.

The effective rate for step ``t`` (0-based count of completed steps) is
``lr / (1 + decay * t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("adadelta", "rmsprop")


@dataclass
class OptimizerState:
    kind: str = "rmsprop"
    lr: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8
    decay: float = 0.0
    iterations: int = 0
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    delta_accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in KINDS:
            raise ValueError(f"unsupported optimizer {self.kind!r}")

    @property
    def effective_lr(self) -> float:
        return self.lr / (1.0 + self.decay * self.iterations)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if self.kind == "rmsprop":
            rmsprop_step(self, params, grads)
        else:
            adadelta_step(self, params, grads)


def _check(params, grads):
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ValueError(f"gradient shape {grads[k].shape} != parameter shape {p.shape} for {k}")


def rmsprop_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """In-place update of ``params``."""
    _check(params, grads)
    lr = state.effective_lr
    rho, eps = state.rho, state.epsilon
    for k, p in params.items():
        g = grads[k]
        acc = state.accumulators.get(k)
        if acc is None:
            acc = np.zeros_like(p)
        acc = rho * acc + (1.0 - rho) * g * g
        state.accumulators[k] = acc
        p -= lr * g / np.sqrt(acc + eps)
    state.iterations += 1


def adadelta_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    _check(params, grads)
    lr = state.effective_lr
    rho, eps = state.rho, state.epsilon
    for k, p in params.items():
        g = grads[k]
        acc = state.accumulators.get(k)
        if acc is None:
            acc = np.zeros_like(p)
        dacc = state.delta_accumulators.get(k)
        if dacc is None:
            dacc = np.zeros_like(p)
        acc = rho * acc + (1.0 - rho) * g * g
        update = g * np.sqrt(dacc + eps) / np.sqrt(acc + eps)
        p -= lr * update
        state.accumulators[k] = acc
        state.delta_accumulators[k] = rho * dacc + (1.0 - rho) * update * update
    state.iterations += 1
