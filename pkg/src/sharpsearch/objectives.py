"""Objective adapters: configuration -> accuracy-like value in [0, 1].

Three kinds live here:

* :class:`TabularBenchmark` -- exact lookup in a fully materialised table.
* :class:`SyntheticLandscape` -- seeded additive + pairwise-interaction
  landscape, cheap enough for oracle-checked optimisation tests.
* :class:`TrainerObjective` -- builds and trains a desk-scale sharpened
  network for the configuration and scores it on held-out data.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optimizer import atomic_write_text
from .space import Configuration, SearchSpace, SpaceError, format_value
from .whetstone.network import BatchNormSpec, ConvSpec, Network, NetworkSpec, build_network, train
from .whetstone.optim import OptimizerState
from .whetstone.schedule import SharpeningSchedule, validate_schedule

log = logging.getLogger(__name__)

__all__ = [
    "TabularBenchmark",
    "SyntheticLandscape",
    "make_synthetic",
    "evaluate_synthetic",
    "evaluate_tabular",
    "materialize",
    "Dataset",
    "DatasetError",
    "load_dataset",
    "default_dataset_path",
    "FIXED_DEFAULTS",
    "ConfiguredNetwork",
    "network_spec_from_config",
    "build_network_from_config",
    "TrainerObjective",
    "TrainerResult",
    "TrainingDiverged",
    "evaluate_trainer",
]


# --- tabular -------------------------------------------------------------------


class TabularBenchmark:
    """Total lookup table over a search space."""

    def __init__(self, space: SearchSpace, table: Mapping[Configuration, float]):
        self.space = space
        self.table: dict[Configuration, float] = {}
        for cfg, v in table.items():
            cfg = space.config(cfg)
            v = float(v)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"table value {v} outside [0, 1] for {cfg.to_pairs()}")
            self.table[cfg] = v
        n = space.cardinality()
        if len(self.table) != n:
            raise ValueError(f"table has {len(self.table)} entries but the space has {n} configurations")

    def __call__(self, config: Mapping) -> float:
        return evaluate_tabular(self, config)

    def __len__(self):
        return len(self.table)

    @classmethod
    def from_function(cls, space: SearchSpace, fn, limit: int = 10**6) -> "TabularBenchmark":
        return cls(space, {c: fn(c) for c in space.enumerate(limit)})

    def max(self) -> tuple[Configuration, float]:
        best = max(self.table.items(), key=lambda kv: kv[1])
        return best

    def to_text(self) -> str:
        lines = [f"{cfg.to_pairs()}\t{v!r}" for cfg, v in self.table.items()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.to_text())

    @classmethod
    def from_text(cls, space: SearchSpace, text: str, source: str = "<string>") -> "TabularBenchmark":
        table = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            pairs, sep, value = line.rpartition("\t")
            if not sep:
                raise ValueError(f"{source}:{lineno}: expected '<name=value pairs>\\t<value>'")
            try:
                cfg = space.parse_pairs(pairs)
                v = float(value)
            except (SpaceError, ValueError) as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
            if cfg in table:
                raise ValueError(f"{source}:{lineno}: duplicate configuration")
            table[cfg] = v
        return cls(space, table)

    @classmethod
    def read(cls, space: SearchSpace, path) -> "TabularBenchmark":
        path = Path(path)
        return cls.from_text(space, path.read_text(), source=str(path))


def evaluate_tabular(bench: TabularBenchmark, config: Mapping) -> float:
    cfg = bench.space.config(config)
    try:
        return bench.table[cfg]
    except KeyError:
        raise KeyError(f"configuration missing from table: {cfg.to_pairs()}") from None


# --- synthetic ------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticLandscape:
    """value = clamp(base + sum(effects) + sum(interactions) + noise, 0, 1).

    Effects and interactions are drawn once from ``seed``; the noise term
    is a deterministic function of (seed, configuration).
    """

    space: SearchSpace
    seed: int
    noise_std: float
    base: float
    effects: tuple[np.ndarray, ...] = field(repr=False)
    interactions: dict[tuple[int, int], np.ndarray] = field(repr=False)

    def __call__(self, config: Mapping) -> float:
        return evaluate_synthetic(self, config)

    def evaluate_indices(self, idx: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        val = np.full(idx.shape[0], self.base)
        for j, eff in enumerate(self.effects):
            val += eff[idx[:, j]]
        for (i, j), tab in self.interactions.items():
            val += tab[idx[:, i], idx[:, j]]
        if self.noise_std > 0:
            codes = np.ravel_multi_index(tuple(idx.T), tuple(self.space.sizes))
            val += np.array([
                np.random.default_rng([self.seed, 0x5EED, int(c)]).standard_normal() for c in codes
            ]) * self.noise_std
        return np.clip(val, 0.0, 1.0)


def make_synthetic(space: SearchSpace, seed: int, noise_std: float = 0.0, *,
                   base: float = 0.5, effect_scale: float = 0.15,
                   interaction_scale: float = 0.05) -> SyntheticLandscape:
    """Draw a landscape.  ``effect_scale`` and ``interaction_scale`` are the
    total standard deviations contributed by main effects and by all pairwise
    interactions respectively."""
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng([seed, 0x1A4D])
    d = len(space)
    pairs = list(itertools.combinations(range(d), 2))
    eff_sd = effect_scale / math.sqrt(d)
    int_sd = interaction_scale / math.sqrt(max(len(pairs), 1))
    effects = tuple(rng.normal(0.0, eff_sd, size=k) for k in space.sizes)
    interactions = {
        (i, j): rng.normal(0.0, int_sd, size=(space.sizes[i], space.sizes[j])) for i, j in pairs
    }
    return SyntheticLandscape(space, int(seed), float(noise_std), float(base), effects, interactions)


def evaluate_synthetic(landscape: SyntheticLandscape, config: Mapping) -> float:
    return float(landscape.evaluate_indices(landscape.space.indices(config))[0])


def materialize(landscape: SyntheticLandscape, limit: int = 10**6) -> TabularBenchmark:
    """Tabulate a synthetic landscape over its whole space."""
    space = landscape.space
    idx = space.enumerate_indices(limit)
    values = landscape.evaluate_indices(idx)
    return TabularBenchmark(space, {space.from_indices(r): float(v) for r, v in zip(idx, values)})


def format_config(config: Mapping) -> str:
    return " ".join(f"{k}={format_value(v)}" for k, v in config.items())


# --- dataset ---------------------------------------------------------------------


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Images scaled to [0, 1] with seeded 70/15/15 train/validation/test splits."""

    train: tuple[np.ndarray, np.ndarray]
    validation: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    num_classes: int
    image_shape: tuple[int, int, int]

    def images(self, split) -> np.ndarray:
        x, _ = split
        return x.reshape((-1, *self.image_shape))


def _infer_shape(n_features: int) -> tuple[int, int, int]:
    side = math.isqrt(n_features)
    if side * side == n_features:
        return (side, side, 1)
    return (1, n_features, 1)


def load_dataset(path, seed: int = 0, num_classes: int | None = None,
                 image_shape: tuple[int, int, int] | None = None) -> Dataset:
    """Read ``pixel,...,pixel,label`` rows (pixels in 0..255)."""
    path = Path(path)
    rows, labels = [], []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(t) for t in line.split(",")]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric field") from None
            if len(vals) < 2:
                raise DatasetError(f"{path}:{lineno}: need at least one pixel and a label")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} fields, got {len(vals)}")
            px, lab = vals[:-1], vals[-1]
            if not all(0.0 <= p <= 255.0 for p in px):
                raise DatasetError(f"{path}:{lineno}: pixel outside [0, 255]")
            if lab != int(lab) or lab < 0:
                raise DatasetError(f"{path}:{lineno}: label must be a non-negative integer")
            rows.append(px)
            labels.append(int(lab))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    x = np.array(rows) / 255.0
    y = np.array(labels, dtype=np.int64)
    k = num_classes if num_classes is not None else int(y.max()) + 1
    if y.max() >= k:
        raise DatasetError(f"{path}: label {int(y.max())} out of range for {k} classes")
    shape = image_shape or _infer_shape(x.shape[1])
    if int(np.prod(shape)) != x.shape[1]:
        raise DatasetError(f"image shape {shape} does not match {x.shape[1]} pixels")
    n = len(x)
    n_hold = int(round(0.15 * n))
    perm = np.random.default_rng(seed).permutation(n)
    tr, va, te = perm[:n - 2 * n_hold], perm[n - 2 * n_hold:n - n_hold], perm[n - n_hold:]
    return Dataset((x[tr], y[tr]), (x[va], y[va]), (x[te], y[te]), k, tuple(shape))


def default_dataset_path() -> Path:
    return Path(__file__).parent / "data" / "digits8x8.csv"


# --- configuration -> network ----------------------------------------------------

# Values held fixed in the small (256-point) study; they fill any name a
# configuration does not assign.
FIXED_DEFAULTS: dict[str, object] = {
    "rho": 0.9,
    "epsilon": 1e-6,
    "optimizer": "adadelta",
    "noise_std": 0.2,
    "noise_location": "without_noise",
    "bn_momentum_conv": 0.95,
    "bn_momentum_dense": 0.95,
    "bn_epsilon": 1e-3,
    "bn_center": "true",
    "bn_scale": "true",
    "filter2": 5,
    "filter3": 3,
    "feat2": 256,
    "feat3": 512,
}
REQUIRED = ("lr", "decay", "sh_st", "sh_du", "sh_int", "filter1", "feat1", "dense")
KNOWN = frozenset(REQUIRED) | frozenset(FIXED_DEFAULTS)
NOISE_LOCATIONS = ("without_noise", "after_first_dense")


@dataclass
class ConfiguredNetwork:
    spec: NetworkSpec
    network: Network
    optimizer: OptimizerState
    schedule: SharpeningSchedule
    seed: int


def _bool(v) -> bool:
    s = str(v).lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(name, v) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"{name} must be integral, got {v!r}")
    return int(f)


def resolve_config(config: Mapping) -> dict:
    """Merge ``config`` over :data:`FIXED_DEFAULTS`; reject unknown names."""
    unknown = sorted(set(config) - KNOWN)
    if unknown:
        raise KeyError(f"unknown hyperparameter(s): {', '.join(unknown)}")
    missing = [n for n in REQUIRED if n not in config]
    if missing:
        raise KeyError(f"missing hyperparameter(s): {', '.join(missing)}")
    merged = dict(FIXED_DEFAULTS)
    merged.update(config)
    return merged


def network_spec_from_config(config: Mapping, input_shape=(8, 8, 1), num_classes: int = 10,
                             width_divisor: int = 1) -> NetworkSpec:
    c = resolve_config(config)
    div = max(1, int(width_divisor))
    feats = [max(1, _int(f"feat{i}", c[f"feat{i}"]) // div) for i in (1, 2, 3)]
    filters = [_int(f"filter{i}", c[f"filter{i}"]) for i in (1, 2, 3)]
    convs = tuple(ConvSpec(f, n, pool=i < 2) for i, (f, n) in enumerate(zip(filters, feats)))
    center, scale = _bool(c["bn_center"]), _bool(c["bn_scale"])
    eps = float(c["bn_epsilon"])
    location = str(c["noise_location"]).lower()
    if location not in NOISE_LOCATIONS:
        raise ValueError(f"unknown noise location {c['noise_location']!r}")
    noisy = location == "after_first_dense"
    return NetworkSpec(
        input_shape=tuple(input_shape),
        conv=convs,
        dense=(max(1, _int("dense", c["dense"]) // div),),
        num_classes=num_classes,
        num_outputs=10 * num_classes,
        n_per_class=10,
        bn_conv=BatchNormSpec(float(c["bn_momentum_conv"]), eps, center, scale),
        bn_dense=BatchNormSpec(float(c["bn_momentum_dense"]), eps, center, scale),
        noise_after_dense=0 if noisy else None,
        noise_std=float(c["noise_std"]) if noisy else 0.0,
    )


def build_network_from_config(config: Mapping, seed: int = 0, input_shape=(8, 8, 1),
                              num_classes: int = 10, width_divisor: int = 1) -> ConfiguredNetwork:
    """Desk-scale network, optimizer state and sharpening schedule for ``config``.

    Three conv blocks (2x2 pooling after the first two), one dense block
    and a 10-per-class population output.
    """
    spec = network_spec_from_config(config, input_shape, num_classes, width_divisor)
    c = resolve_config(config)
    opt = OptimizerState(
        kind=str(c["optimizer"]).lower(),
        lr=float(c["lr"]),
        rho=float(c["rho"]),
        epsilon=float(c["epsilon"]),
        decay=float(c["decay"]),
    )
    schedule = SharpeningSchedule(_int("sh_st", c["sh_st"]), _int("sh_du", c["sh_du"]), _int("sh_int", c["sh_int"]))
    return ConfiguredNetwork(spec, build_network(spec, seed), opt, schedule, seed)


# --- trainer objective -------------------------------------------------------------


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainerResult:
    value: float
    binarized_accuracy: float
    test_accuracy: float
    failed: bool
    schedule_verdict: str
    history: object = field(repr=False, default=None)


@dataclass
class TrainerObjective:
    """Train the configured network and score final validation accuracy."""

    dataset: Dataset
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    width_divisor: int = 1
    results: dict = field(default_factory=dict, repr=False)

    def __call__(self, config: Mapping) -> float:
        res = evaluate_trainer(self, config, self.seed)
        self.results[Configuration(list(config), list(config.values()))] = res
        if res.failed:
            raise TrainingDiverged(res.schedule_verdict)
        return res.value


def evaluate_trainer(objective: TrainerObjective, config: Mapping, seed: int) -> TrainerResult:
    ds = objective.dataset
    built = build_network_from_config(config, seed, ds.image_shape, ds.num_classes, objective.width_divisor)
    net = built.network
    verdict = validate_schedule(built.schedule, net.group_count, objective.epochs)
    if not verdict.complete:
        log.warning("%s (%d epochs)", verdict, objective.epochs)
    train_x = ds.images(ds.train)
    val_x, val_y = ds.images(ds.validation), ds.validation[1]
    test_x, test_y = ds.images(ds.test), ds.test[1]
    _, history = train(net, (train_x, ds.train[1]), built.optimizer, built.schedule, objective.epochs,
                       objective.batch_size, np.random.default_rng([seed, 1]), validation=(val_x, val_y))
    if history.failed:
        return TrainerResult(0.0, 0.0, 0.0, True, history.failure, history)
    return TrainerResult(
        value=net.accuracy(val_x, val_y),
        binarized_accuracy=net.binarized_accuracy(val_x, val_y),
        test_accuracy=net.accuracy(test_x, test_y),
        failed=False,
        schedule_verdict=str(verdict),
        history=history,
    )
