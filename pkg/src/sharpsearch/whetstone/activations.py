"""Sharpenable activations.

Both kinds are homotopies in the sharpness ``s`` from a smooth unit
(``s = 0``) to the binary step ``[x >= 0.5]`` (``s = 1``), steepening
about x = 0.5 with slope ``1 / (1 - s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("bounded_relu", "sigmoid")

# backward at s == 1 uses this surrogate sharpness (straight-through style)
SURROGATE_SHARPNESS = 0.999


def _check(kind: str, s: float) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown activation kind {kind!r}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sharpness {s} outside [0, 1]")


def activation_forward(kind: str, s: float, x):
    _check(kind, s)
    x = np.asarray(x, dtype=float)
    if s >= 1.0:
        return (x >= 0.5).astype(float)
    z = (x - 0.5) / (1.0 - s)
    if kind == "bounded_relu":
        return np.clip(0.5 + z, 0.0, 1.0)
    return expit(z)


def activation_backward(kind: str, s: float, x):
    """dy/dx of the smooth form; at s == 1 the s = 0.999 slope is used."""
    _check(kind, s)
    x = np.asarray(x, dtype=float)
    s = min(s, SURROGATE_SHARPNESS)
    slope = 1.0 / (1.0 - s)
    z = (x - 0.5) * slope
    if kind == "bounded_relu":
        u = 0.5 + z
        return np.where((u > 0.0) & (u < 1.0), slope, 0.0)
    y = expit(z)
    return slope * y * (1.0 - y)


@dataclass
class SharpenableActivation:
    """Activation layer whose sharpness is set by the sharpener each epoch."""

    kind: str = "bounded_relu"
    sharpness: float = 0.0

    def __post_init__(self):
        _check(self.kind, self.sharpness)
        self._x = None

    def set_sharpness(self, s: float) -> None:
        _check(self.kind, s)
        self.sharpness = float(s)

    def forward(self, x, training: bool = False):
        self._x = x
        return activation_forward(self.kind, self.sharpness, x)

    def backward(self, dout):
        return dout * activation_backward(self.kind, self.sharpness, self._x)
