"""Acquisition functions, the sequential Bayesian loop and the grid baseline.

Everything maximises: objectives are accuracies in [0, 1].  A failed
objective evaluation is logged with value 0 and the loop carries on.
"""

from __future__ import annotations

import logging
import math
import os
import time
from collections.abc import Callable, Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .space import Configuration, SearchSpace, SpaceError, format_value
from .surrogate import GpModel, fit, predict, tune_kernel

__all__ = [
    "ExhaustedSpaceError",
    "Acquisition",
    "LoopConfig",
    "LogRecord",
    "RunLog",
    "expected_improvement",
    "ucb",
    "poi",
    "propose_next",
    "candidate_indices",
    "run_bayesian",
    "run_grid",
    "run_random",
]

log = logging.getLogger(__name__)

FAILED_VALUE = 0.0
PHASES = ("init", "bayes", "grid", "random")
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ExhaustedSpaceError(SpaceError):
    """Every candidate configuration has already been evaluated."""


# --- acquisition functions ---------------------------------------------------


def _phi(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def expected_improvement(mean, variance, best_so_far, xi: float = 0.0):
    """Closed-form EI for maximisation; exact ``max(mean - best - xi, 0)`` at zero variance."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    imp = mean - best_so_far - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, imp * ndtr(z) + sigma * _phi(z), np.maximum(imp, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def ucb(mean, variance, kappa: float = 2.0):
    val = np.asarray(mean, dtype=float) + kappa * np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    return float(val) if val.ndim == 0 else val


def poi(mean, variance, best_so_far, xi: float = 0.0):
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    imp = mean - best_so_far - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(sigma > 0, ndtr(imp / np.where(sigma > 0, sigma, 1.0)), (imp > 0).astype(float))
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class Acquisition:
    kind: str = "ei"
    param: float = 0.01

    def __post_init__(self):
        if self.kind not in ("ei", "ucb", "poi"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if not self.param >= 0:
            raise ValueError("acquisition parameter must be non-negative")

    @classmethod
    def parse(cls, kind: str, param: float | None = None) -> "Acquisition":
        if param is None:
            param = 2.0 if kind == "ucb" else 0.01
        return cls(kind, param)

    def __call__(self, mean, variance, best_so_far):
        if self.kind == "ei":
            return expected_improvement(mean, variance, best_so_far, self.param)
        if self.kind == "poi":
            return poi(mean, variance, best_so_far, self.param)
        return ucb(mean, variance, self.param)


# --- run log -------------------------------------------------------------------


@dataclass(frozen=True)
class LogRecord:
    iteration: int
    phase: str
    config: Configuration
    value: float
    seed: int
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def to_line(self) -> str:
        return "\t".join([
            str(self.iteration),
            self.phase,
            self.config.to_pairs(),
            repr(float(self.value)),
            str(self.seed),
            f"{self.wall_time:.6f}",
            self.status,
        ])


_HEADER = "# iteration\tphase\tconfig\tvalue\tseed\twall_time\tstatus"


@dataclass
class RunLog:
    """Append-only evaluation record.  Iterations are numbered from 1."""

    records: list[LogRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, phase: str, config: Configuration, value: float, seed: int,
               wall_time: float = 0.0, status: str = "ok") -> LogRecord:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        rec = LogRecord(len(self.records) + 1, phase, config, float(value), int(seed), float(wall_time), status)
        self.records.append(rec)
        return rec

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.values) if self.records else np.zeros(0)

    def best(self) -> LogRecord:
        """Highest-value record; the earliest one wins ties."""
        if not self.records:
            raise ValueError("empty run log")
        return self.records[int(np.argmax(self.values))]

    def configs(self) -> list[Configuration]:
        return [r.config for r in self.records]

    def to_text(self) -> str:
        return "\n".join([_HEADER, *(r.to_line() for r in self.records)]) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.to_text())

    @classmethod
    def from_text(cls, text: str, space: SearchSpace | None = None, source: str = "<string>") -> "RunLog":
        out = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (6, 7):
                raise ValueError(f"{source}:{lineno}: expected 6 or 7 tab-separated fields, got {len(parts)}")
            try:
                iteration = int(parts[0])
                phase = parts[1]
                if phase not in PHASES:
                    raise ValueError(f"unknown phase {phase!r}")
                config = space.parse_pairs(parts[2]) if space is not None else _raw_config(parts[2])
                value = float(parts[3])
                seed = int(parts[4])
                wall = float(parts[5])
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
            status = parts[6] if len(parts) == 7 else "ok"
            if iteration != len(out.records) + 1:
                raise ValueError(f"{source}:{lineno}: iteration {iteration} breaks the 1..n sequence")
            out.records.append(LogRecord(iteration, phase, config, value, seed, wall, status))
        return out

    @classmethod
    def read(cls, path, space: SearchSpace | None = None) -> "RunLog":
        path = Path(path)
        return cls.from_text(path.read_text(), space, source=str(path))


def _raw_config(text: str) -> Configuration:
    names, values = [], []
    for tok in text.split():
        name, sep, value = tok.partition("=")
        if not sep:
            raise ValueError(f"expected name=value, got {tok!r}")
        names.append(name)
        values.append(value)
    return Configuration(names, values)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


# --- candidate generation and proposal ----------------------------------------


@dataclass(frozen=True)
class LoopConfig:
    n_iter: int = 15
    n_init: int = 2
    acquisition: Acquisition = field(default_factory=Acquisition)
    candidate_limit: int = 4096
    seed: int = 0
    standardize: bool = True
    grid: dict | None = None

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be at least 1")
        if self.n_iter < self.n_init:
            raise ValueError("n_iter must be >= n_init")
        if self.candidate_limit < 1:
            raise ValueError("candidate_limit must be positive")


def _codes(space: SearchSpace, idx: np.ndarray) -> np.ndarray:
    return np.ravel_multi_index(tuple(np.asarray(idx, dtype=np.int64).T), tuple(space.sizes))


def _perturbations(space: SearchSpace, base: np.ndarray) -> np.ndarray:
    rows = []
    for j, k in enumerate(space.sizes):
        for opt in range(k):
            if opt != base[j]:
                row = base.copy()
                row[j] = opt
                rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, len(space))


def candidate_indices(space: SearchSpace, evaluated_idx: np.ndarray, incumbents: np.ndarray,
                      rng: np.random.Generator, candidate_limit: int) -> np.ndarray:
    """Unevaluated candidates, in generation order.

    Small spaces are enumerated.  Larger ones get ``candidate_limit``
    uniform samples followed by every one-hyperparameter neighbour of each
    incumbent row.  Duplicates keep their first position.
    """
    n = space.cardinality()
    if n <= candidate_limit:
        cand = space.enumerate_indices(n)
    else:
        parts = [space.sample_indices(rng, candidate_limit)]
        parts += [_perturbations(space, row) for row in incumbents]
        cand = np.concatenate(parts, axis=0)
    codes = _codes(space, cand)
    _, first = np.unique(codes, return_index=True)
    keep = np.zeros(len(cand), dtype=bool)
    keep[first] = True
    if len(evaluated_idx):
        keep &= ~np.isin(codes, _codes(space, evaluated_idx))
    return cand[keep]


def propose_next(model: GpModel | None, space: SearchSpace, acquisition: Acquisition,
                 evaluated: Iterable[Mapping], rng: np.random.Generator,
                 candidate_limit: int = 4096) -> Configuration:
    """Acquisition argmax over the candidate set (earliest candidate wins ties).

    Without a model the first unevaluated candidate in a freshly sampled
    order is returned, i.e. a uniform draw from the unevaluated set.
    """
    evaluated_idx = np.array([space.indices(c) for c in evaluated], dtype=np.int64).reshape(-1, len(space))
    incumbents = np.zeros((0, len(space)), dtype=np.int64)
    if model is not None and model.n:
        order = np.argsort(-model.y, kind="stable")[:3]
        incumbents = np.array([space.indices(space.decode(model.X[i])) for i in order], dtype=np.int64)
    cand = candidate_indices(space, evaluated_idx, incumbents, rng, candidate_limit)
    if len(cand) == 0:
        raise ExhaustedSpaceError("every candidate configuration has already been evaluated")
    if model is None:
        return space.from_indices(cand[rng.integers(len(cand))])
    mean, var = predict(model, space.encode_indices(cand))
    best = float(model.y.max()) if model.n else 0.0
    scores = np.asarray(acquisition(mean, var, best))
    return space.from_indices(cand[int(np.argmax(scores))])


# --- loops -------------------------------------------------------------------------


Objective = Callable[[Configuration], float]


def _evaluate(objective: Objective, config: Configuration) -> tuple[float, float, str]:
    t0 = time.perf_counter()
    try:
        value = float(objective(config))
        status = "ok" if math.isfinite(value) else "failed"
    except Exception as exc:  # objective failures are data, not crashes
        log.warning("objective failed on %s: %s", config.to_pairs(), exc)
        value, status = FAILED_VALUE, "failed"
    if status != "ok":
        value = FAILED_VALUE
    return value, time.perf_counter() - t0, status


def run_bayesian(space: SearchSpace, objective: Objective, loop: LoopConfig,
                 callback: Callable[[LogRecord], None] | None = None) -> RunLog:
    """Sequential GP-based optimisation; never evaluates a configuration twice."""
    if loop.n_iter > space.cardinality():
        raise ExhaustedSpaceError(
            f"budget of {loop.n_iter} evaluations exceeds the {space.cardinality()} configurations in the space"
        )
    rng = np.random.default_rng(loop.seed)
    runlog = RunLog()
    seen: set[Configuration] = set()

    def record(phase, cfg):
        value, wall, status = _evaluate(objective, cfg)
        seen.add(cfg)
        rec = runlog.append(phase, cfg, value, loop.seed, wall, status)
        log.info("iter %d [%s] value=%.4f %s", rec.iteration, phase, value, cfg.to_pairs())
        if callback:
            callback(rec)

    while len(runlog) < loop.n_init:
        cfg = space.sample_uniform(rng)
        if cfg not in seen:
            record("init", cfg)

    while len(runlog) < loop.n_iter:
        X = space.encode_indices(np.array([space.indices(c) for c in runlog.configs()]))
        y = runlog.values
        params = tune_kernel((X, y), loop.grid, standardize=loop.standardize)
        model = fit((X, y), params, standardize=loop.standardize)
        cfg = propose_next(model, space, loop.acquisition, seen, rng, loop.candidate_limit)
        record("bayes", cfg)
    return runlog


def run_random(space: SearchSpace, objective: Objective, n: int, seed: int) -> RunLog:
    """Uniform sampling without replacement; the baseline BO is compared against."""
    if n > space.cardinality():
        raise ExhaustedSpaceError(f"{n} draws exceed the space's {space.cardinality()} configurations")
    rng = np.random.default_rng(seed)
    runlog = RunLog()
    seen: set[Configuration] = set()
    while len(runlog) < n:
        cfg = space.sample_uniform(rng)
        if cfg in seen:
            continue
        seen.add(cfg)
        value, wall, status = _evaluate(objective, cfg)
        runlog.append("random", cfg, value, seed, wall, status)
    return runlog


def grid_threads() -> int:
    try:
        return max(1, int(os.environ.get("SHARPSEARCH_THREADS", "1")))
    except ValueError:
        return 1


def run_grid(space: SearchSpace, objective: Objective, limit: int = 10**6,
             threads: int | None = None, seed: int = 0) -> RunLog:
    """Evaluate every configuration; the log is in enumeration order whatever the fan-out."""
    configs = list(space.enumerate(limit))
    threads = threads or grid_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _evaluate(objective, c), configs))
    else:
        results = [_evaluate(objective, c) for c in configs]
    runlog = RunLog()
    for cfg, (value, wall, status) in zip(configs, results):
        runlog.append("grid", cfg, value, seed, wall, status)
    return runlog


def describe_config(config: Mapping) -> str:
    return ", ".join(f"{k}={format_value(v)}" for k, v in config.items())
