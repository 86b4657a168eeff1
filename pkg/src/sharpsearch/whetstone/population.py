"""n-hot population output encoding and its softmax cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax


@dataclass(frozen=True)
class OutputKey:
    """Class -> output-neuron assignment.  Each class owns ``n_per_class`` neurons."""

    assignment: tuple[tuple[int, ...], ...]
    num_outputs: int

    def __post_init__(self):
        sizes = {len(a) for a in self.assignment}
        if not self.assignment or 0 in sizes:
            raise ValueError("every class needs at least one output neuron")
        if len(sizes) != 1:
            raise ValueError("classes must own the same number of neurons")
        for a in self.assignment:
            if len(set(a)) != len(a) or min(a) < 0 or max(a) >= self.num_outputs:
                raise ValueError("invalid neuron indices in output key")

    @property
    def num_classes(self) -> int:
        return len(self.assignment)

    @property
    def n_per_class(self) -> int:
        return len(self.assignment[0])

    @property
    def matrix(self) -> np.ndarray:
        """``(num_outputs, num_classes)`` averaging matrix: logits = outputs @ matrix."""
        M = np.zeros((self.num_outputs, self.num_classes))
        for c, idx in enumerate(self.assignment):
            M[list(idx), c] = 1.0 / len(idx)
        return M

    def to_list(self) -> list[list[int]]:
        return [list(a) for a in self.assignment]


def make_output_key(num_classes: int, num_outputs: int, n_per_class: int,
                    overlap: bool = False, rng: np.random.Generator | None = None) -> OutputKey:
    """Seeded neuron distribution key.

    Without overlap the classes take disjoint slices of a random
    permutation; neurons beyond ``num_classes * n_per_class`` stay
    unassigned.  With overlap each class draws its neurons independently
    without replacement.
    """
    if num_classes < 1 or n_per_class < 1:
        raise ValueError("num_classes and n_per_class must be positive")
    if n_per_class > num_outputs:
        raise ValueError("n_per_class exceeds num_outputs")
    if not overlap and num_classes * n_per_class > num_outputs:
        raise ValueError(
            f"{num_classes} classes x {n_per_class} neurons do not fit disjointly into {num_outputs} outputs"
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    if overlap:
        groups = [tuple(sorted(int(i) for i in rng.choice(num_outputs, n_per_class, replace=False)))
                  for _ in range(num_classes)]
    else:
        perm = rng.permutation(num_outputs)
        groups = [tuple(sorted(int(i) for i in perm[c * n_per_class:(c + 1) * n_per_class]))
                  for c in range(num_classes)]
    return OutputKey(tuple(groups), num_outputs)


def population_logits(key: OutputKey, outputs) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[-1] != key.num_outputs:
        raise ValueError(f"expected {key.num_outputs} outputs, got {outputs.shape[-1]}")
    return outputs @ key.matrix


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=float), axis=-1))


def population_loss(key: OutputKey, outputs, label) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to ``outputs``.

    ``outputs`` may be one vector with an int label or a batch with a
    label array; the loss is averaged over the batch.
    """
    outputs = np.asarray(outputs, dtype=float)
    single = outputs.ndim == 1
    out2 = np.atleast_2d(outputs)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape[0] != out2.shape[0]:
        raise ValueError("label count does not match batch size")
    if labels.min() < 0 or labels.max() >= key.num_classes:
        raise ValueError("label out of range")
    M = key.matrix
    logp = log_softmax(out2 @ M, axis=-1)
    n = out2.shape[0]
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    grad = (dlogits / n) @ M.T
    return loss, (grad[0] if single else grad)
