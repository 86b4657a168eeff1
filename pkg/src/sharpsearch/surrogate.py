"""Gaussian-process regression on encoded configurations.

Isotropic Matern-5/2 kernel, standardised targets, Cholesky solves with
escalating diagonal jitter, and a coarse grid search over kernel
hyperparameters by log marginal likelihood.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist, squareform

__all__ = [
    "SingularKernelError",
    "Observation",
    "KernelParams",
    "GpModel",
    "DEFAULT_PARAMS",
    "DEFAULT_GRID",
    "matern52",
    "kernel_eval",
    "kernel_matrix",
    "fit",
    "predict",
    "log_marginal_likelihood",
    "tune_kernel",
]

JITTER_START = 1e-10
JITTER_MAX = 1e-4
_SQRT5 = math.sqrt(5.0)


class SingularKernelError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Observation:
    point: np.ndarray
    value: float

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float)
        if p.ndim != 1:
            raise ValueError("observation point must be a vector")
        if not math.isfinite(self.value):
            raise ValueError("observation value must be finite")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 1e-4

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be non-negative")


DEFAULT_PARAMS = KernelParams(1.0, 1.0, 1e-4)
DEFAULT_GRID = {
    "lengthscale": (0.1, 0.3, 1.0, 3.0),
    "noise_variance": (1e-6, 1e-4, 1e-2),
}


def matern52(r, lengthscale: float, signal_variance: float):
    """Matern-5/2 covariance as a function of Euclidean distance ``r``."""
    t = _SQRT5 * np.asarray(r, dtype=float) / lengthscale
    return signal_variance * (1.0 + t + t * t / 3.0) * np.exp(-t)


def kernel_eval(params: KernelParams, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(matern52(np.linalg.norm(a - b), params.lengthscale, params.signal_variance))


def kernel_matrix(params: KernelParams, A, B=None) -> np.ndarray:
    """Cross-covariance ``k(A_i, B_j)``.

    With ``B`` omitted the result is the exactly symmetric Gram matrix of
    ``A``: the upper triangle is computed and mirrored, the diagonal is
    ``signal_variance``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if B is None:
        K = squareform(matern52(pdist(A), params.lengthscale, params.signal_variance))
        np.fill_diagonal(K, params.signal_variance)
        return K
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return matern52(cdist(A, B), params.lengthscale, params.signal_variance)


@dataclass(frozen=True)
class GpModel:
    """A fitted (or prior-only) GP.  Immutable once built by :func:`fit`."""

    X: np.ndarray
    y: np.ndarray
    kernel: KernelParams
    y_mean: float = 0.0
    y_std: float = 1.0
    chol: np.ndarray | None = None
    alpha: np.ndarray | None = None
    jitter: float = 0.0
    standardize: bool = True

    @classmethod
    def prior(cls, params: KernelParams = DEFAULT_PARAMS, dim: int | None = None) -> "GpModel":
        X = np.zeros((0, dim or 0))
        return cls(X, np.zeros(0), params, chol=np.zeros((0, 0)), alpha=np.zeros(0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def observations(self) -> list[Observation]:
        return [Observation(x, v) for x, v in zip(self.X, self.y)]

    @property
    def z(self) -> np.ndarray:
        """Standardised targets the factorization was solved against."""
        return (self.y - self.y_mean) / self.y_std


def _standardization(y: np.ndarray, standardize: bool) -> tuple[float, float]:
    if not standardize or y.size == 0:
        return 0.0, 1.0
    mean = float(y.mean())
    if y.size < 2:
        return mean, 1.0
    std = float(y.std())
    if not std > 0 or not math.isfinite(std):
        std = 1.0
    return mean, std


def _factor(K: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            L = cholesky(K + (noise + jitter) * np.eye(n), lower=True, check_finite=False)
        except LinAlgError:
            jitter *= 10.0
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
        jitter *= 10.0
    raise SingularKernelError(f"kernel matrix not factorizable with jitter up to {JITTER_MAX:g}")


def fit(observations, params: KernelParams = DEFAULT_PARAMS, *, standardize: bool = True) -> GpModel:
    """Condition the GP on ``observations``.

    ``observations`` is a sequence of :class:`Observation` or an ``(X, y)``
    pair of arrays.
    """
    X, y = _as_arrays(observations)
    if X.shape[0] == 0:
        raise ValueError("fit needs at least one observation")
    mean, std = _standardization(y, standardize)
    z = (y - mean) / std
    K = kernel_matrix(params, X)
    L, jitter = _factor(K, params.noise_variance)
    alpha = cho_solve((L, True), z, check_finite=False)
    return GpModel(X, y, params, mean, std, L, alpha, jitter, standardize)


def _as_arrays(observations) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(observations, tuple) and len(observations) == 2 and not isinstance(observations[0], Observation):
        X = np.atleast_2d(np.asarray(observations[0], dtype=float))
        y = np.asarray(observations[1], dtype=float).ravel()
    else:
        obs = list(observations)
        if not obs:
            return np.zeros((0, 0)), np.zeros(0)
        dims = {o.point.shape[0] for o in obs}
        if len(dims) != 1:
            raise ValueError("observations have mixed dimensions")
        X = np.stack([o.point for o in obs])
        y = np.array([o.value for o in obs])
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.all(np.isfinite(y)):
        raise ValueError("observation values must be finite")
    return X, y


def predict(model: GpModel, points) -> tuple[np.ndarray, np.ndarray] | tuple[float, float]:
    """Posterior mean and variance of the latent function.

    A single point (1-d input) returns a pair of floats; a 2-d batch returns
    a pair of arrays.
    """
    if model is None or model.chol is None:
        raise ValueError("model is not fitted")
    P = np.asarray(points, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    sv = model.kernel.signal_variance
    if model.n == 0:
        mean = np.zeros(P.shape[0])
        var = np.full(P.shape[0], sv)
    else:
        if P.shape[1] != model.X.shape[1]:
            raise ValueError(f"dimension mismatch: {P.shape[1]} vs {model.X.shape[1]}")
        Ks = kernel_matrix(model.kernel, model.X, P)
        mean = Ks.T @ model.alpha
        v = solve_triangular(model.chol, Ks, lower=True, check_finite=False)
        var = sv - (v * v).sum(0)
        mean = mean * model.y_std + model.y_mean
        var = var * model.y_std**2
    var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(model: GpModel) -> float:
    """Log evidence of the standardised targets under the fitted kernel."""
    n = model.n
    if n == 0:
        return 0.0
    z = model.z
    return float(
        -0.5 * z @ model.alpha
        - np.log(np.diag(model.chol)).sum()
        - 0.5 * n * math.log(2 * math.pi)
    )


def tune_kernel(observations, grid: dict | None = None, *, standardize: bool = True) -> KernelParams:
    """Pick (lengthscale, noise) maximising the log marginal likelihood.

    Signal variance is held at the sample variance of the fitted targets:
    1 for standardised targets.  Without standardisation the raw variance is
    used and the noise grid is read relative to it, so rescaling ``y`` by
    ``c`` rescales the whole posterior consistently.  Ties go to the larger
    lengthscale, then the larger noise.  Fewer than two observations return
    :data:`DEFAULT_PARAMS`.
    """
    X, y = _as_arrays(observations)
    if X.shape[0] < 2:
        return DEFAULT_PARAMS
    scale = 1.0
    if not standardize:
        var = float(y.var())
        scale = var if var > 0 and math.isfinite(var) else 1.0
    grid = grid or DEFAULT_GRID
    lengthscales = sorted(grid.get("lengthscale", DEFAULT_GRID["lengthscale"]))
    noises = sorted(grid.get("noise_variance", DEFAULT_GRID["noise_variance"]))
    best, best_ll = None, -math.inf
    for ls, nv in itertools.product(lengthscales, noises):
        params = KernelParams(ls, scale, nv * scale)
        try:
            ll = log_marginal_likelihood(fit((X, y), params, standardize=standardize))
        except SingularKernelError:
            continue
        # ascending iteration + ">=" resolves ties toward the later (larger) values
        if ll >= best_ll:
            best, best_ll = params, ll
    return best if best is not None else DEFAULT_PARAMS
