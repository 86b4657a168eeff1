"""Sharpenable networks: construction, training, probing, checkpoints.

A network is a chain of blocks

    affine (conv or dense) -> [batchnorm] -> [gaussian noise] -> sharpenable activation -> [2x2 max-pool]

followed by a dense output layer with ``num_outputs`` units clamped to
[0, 1] and read out through an :class:`OutputKey`.  Each block's
activation is one sharpening group; the output layer is not sharpened.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .activations import SharpenableActivation
from .layers import BatchNorm, Conv2D, Dense, GaussianNoise, MaxPool2D
from .optim import OptimizerState
from .population import OutputKey, make_output_key, population_logits, population_loss
from .schedule import AdaptiveSharpener, SharpeningSchedule, schedule_sharpness


@dataclass(frozen=True)
class ConvSpec:
    size: int
    features: int
    pool: bool = False


@dataclass(frozen=True)
class BatchNormSpec:
    momentum: float = 0.99
    epsilon: float = 1e-3
    center: bool = True
    scale: bool = True


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; everything needed to rebuild a network."""

    input_shape: tuple[int, ...]
    conv: tuple[ConvSpec, ...] = ()
    dense: tuple[int, ...] = (128,)
    num_classes: int = 10
    num_outputs: int = 100
    n_per_class: int = 10
    overlap: bool = False
    activation: str = "bounded_relu"
    bn_conv: BatchNormSpec | None = None
    bn_dense: BatchNormSpec | None = None
    # index into ``dense`` after which gaussian noise is inserted
    noise_after_dense: int | None = None
    noise_std: float = 0.0

    @property
    def group_count(self) -> int:
        return len(self.conv) + len(self.dense)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["input_shape"] = tuple(d["input_shape"])
        d["conv"] = tuple(ConvSpec(**c) for c in d.get("conv", ()))
        d["dense"] = tuple(d.get("dense", ()))
        for k in ("bn_conv", "bn_dense"):
            if d.get(k) is not None:
                d[k] = BatchNormSpec(**d[k])
        return cls(**d)


@dataclass
class Block:
    affine: Dense | Conv2D
    activation: SharpenableActivation
    bn: BatchNorm | None = None
    noise: GaussianNoise | None = None
    pool: MaxPool2D | None = None

    def layers(self):
        return [l for l in (self.affine, self.bn, self.noise, self.activation, self.pool) if l is not None]


class Network:
    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.blocks: list[Block] = []
        shape = tuple(spec.input_shape)
        if spec.conv and len(shape) != 3:
            raise ValueError("convolutional blocks need an (H, W, C) input shape")
        for c in spec.conv:
            h, w, ch = shape
            bn = _bn(spec.bn_conv, c.features)
            pool = MaxPool2D() if c.pool else None
            if pool and (h < 2 or w < 2):
                raise ValueError(f"cannot pool a {h}x{w} feature map")
            self.blocks.append(Block(Conv2D(ch, c.features, c.size, rng), SharpenableActivation(spec.activation), bn, None, pool))
            shape = (h // 2, w // 2, c.features) if pool else (h, w, c.features)
        width = int(np.prod(shape))
        for i, units in enumerate(spec.dense):
            noise = GaussianNoise(spec.noise_std) if spec.noise_after_dense == i else None
            self.blocks.append(Block(Dense(width, units, rng), SharpenableActivation(spec.activation), _bn(spec.bn_dense, units), noise))
            width = units
        if spec.noise_after_dense is not None and not 0 <= spec.noise_after_dense < len(spec.dense):
            raise ValueError("noise layer position does not name a dense block")
        self.output = Dense(width, spec.num_outputs, rng)
        self.key = make_output_key(spec.num_classes, spec.num_outputs, spec.n_per_class, spec.overlap, rng)
        self._noise_rng = np.random.default_rng(rng.integers(2**63))
        for b in self.blocks:
            if b.noise is not None:
                b.noise.rng = self._noise_rng

    # --- structure ----------------------------------------------------------

    @property
    def group_count(self) -> int:
        return len(self.blocks)

    @property
    def sharpness(self) -> np.ndarray:
        return np.array([b.activation.sharpness for b in self.blocks])

    def set_sharpness(self, s) -> None:
        s = np.broadcast_to(np.asarray(s, dtype=float), (self.group_count,))
        for b, v in zip(self.blocks, s):
            b.activation.set_sharpness(float(v))

    def layers(self):
        out = []
        for b in self.blocks:
            out.extend(b.layers())
        return out

    def trainable(self):
        """(name, layer) pairs for every layer with parameters."""
        named = []
        for i, b in enumerate(self.blocks):
            named.append((f"block{i}.affine", b.affine))
            if b.bn is not None and b.bn.params:
                named.append((f"block{i}.bn", b.bn))
        named.append(("output", self.output))
        return named

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self.trainable() for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": layer.grads[k] for name, layer in self.trainable() for k in layer.params}

    # --- passes -------------------------------------------------------------------

    def forward(self, x, training: bool = False) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        for layer in self.layers():
            h = layer.forward(h, training)
        self._pre_out = self.output.forward(h, training)
        return np.clip(self._pre_out, 0.0, 1.0)

    def backward(self, dout) -> np.ndarray:
        pre = self._pre_out
        d = dout * ((pre > 0.0) & (pre < 1.0))
        d = self.output.backward(d)
        for layer in reversed(self.layers()):
            d = layer.backward(d)
        return d

    def hidden_activations(self, x) -> list[np.ndarray]:
        """Output of each sharpenable activation, inference mode."""
        acts = []
        h = np.asarray(x, dtype=float)
        for b in self.blocks:
            for layer in b.layers():
                h = layer.forward(h, False)
                if layer is b.activation:
                    acts.append(h)
        return acts

    def logits(self, x) -> np.ndarray:
        return population_logits(self.key, self.forward(x, training=False))

    def predict(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        preds = [self.logits(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def accuracy(self, x, y) -> float:
        if len(y) == 0:
            return float("nan")
        return float((self.predict(x) == np.asarray(y)).mean())

    def binarized_accuracy(self, x, y) -> float:
        """Accuracy with every group forced to full sharpness (sharpness restored after)."""
        saved = self.sharpness
        self.set_sharpness(1.0)
        try:
            return self.accuracy(x, y)
        finally:
            self.set_sharpness(saved)


def _bn(spec: BatchNormSpec | None, n: int) -> BatchNorm | None:
    if spec is None:
        return None
    return BatchNorm(n, spec.momentum, spec.epsilon, spec.center, spec.scale)


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    return Network(spec, np.random.default_rng(seed))


# --- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_accuracy: float
    sharpness: tuple[float, ...]


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    failed: bool = False
    failure: str = ""

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        lines = ["epoch,loss,val_accuracy,sharpness"]
        for r in self.records:
            s = ";".join(repr(v) for v in r.sharpness)
            lines.append(f"{r.epoch},{r.loss!r},{r.val_accuracy!r},{s}")
        return "\n".join(lines) + "\n"


def _split(x, y, rng, frac=0.8):
    perm = rng.permutation(len(x))
    cut = int(round(frac * len(x)))
    return (x[perm[:cut]], y[perm[:cut]]), (x[perm[cut:]], y[perm[cut:]])


def train(network: Network, data, optimizer: OptimizerState,
          sharpener: SharpeningSchedule | AdaptiveSharpener | None, epochs: int,
          batch_size: int = 64, rng: np.random.Generator | None = None,
          validation=None, callback: Callable[[int, Network, EpochRecord], None] | None = None,
          ) -> tuple[Network, History]:
    """Minibatch training with per-epoch sharpening.

    ``data`` is an ``(x, y)`` pair.  Without ``validation`` a seeded 80/20
    split of ``data`` is made.  A non-finite loss stops training and sets
    ``history.failed``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x, y = (np.asarray(a) for a in data)
    if len(x) == 0:
        raise ValueError("empty training set")
    if validation is None:
        (x, y), validation = _split(x, y, rng)
    vx, vy = validation
    history = History()
    params = network.parameters()
    for epoch in range(epochs):
        if isinstance(sharpener, SharpeningSchedule):
            network.set_sharpness(schedule_sharpness(sharpener, epoch, network.group_count))
        elif isinstance(sharpener, AdaptiveSharpener):
            network.set_sharpness(sharpener.sharpness)
        perm = rng.permutation(len(x))
        total, count = 0.0, 0
        for i in range(0, len(x), batch_size):
            idx = perm[i:i + batch_size]
            out = network.forward(x[idx], training=True)
            loss, grad = population_loss(network.key, out, y[idx])
            if not math.isfinite(loss):
                history.failed, history.failure = True, f"non-finite loss at epoch {epoch}"
                return network, history
            network.backward(grad)
            grads = network.gradients()
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                history.failed, history.failure = True, f"non-finite gradient at epoch {epoch}"
                return network, history
            optimizer.step(params, grads)
            total += loss * len(idx)
            count += len(idx)
        epoch_loss = total / count
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            history.failed, history.failure = True, f"non-finite parameters at epoch {epoch}"
            return network, history
        rec = EpochRecord(epoch, epoch_loss, network.accuracy(vx, vy), tuple(float(s) for s in network.sharpness))
        history.records.append(rec)
        if isinstance(sharpener, AdaptiveSharpener):
            sharpener.step(epoch_loss, epoch)
        if callback is not None:
            callback(epoch, network, rec)
    return network, history


def dead_neuron_fraction(network: Network, probe) -> float:
    """Fraction of hidden units silent (exactly 0) on every probe input.

    A dense unit is one neuron; a convolutional unit is one feature map
    (silent at every spatial position).
    """
    probe = np.asarray(probe, dtype=float)
    if len(probe) == 0:
        raise ValueError("empty probe set")
    dead = total = 0
    for act in network.hidden_activations(probe):
        peak = act.reshape(-1, act.shape[-1]).max(axis=0)
        dead += int((peak == 0).sum())
        total += peak.size
    return dead / total if total else 0.0


# --- checkpoints -------------------------------------------------------------------


def save_checkpoint(network: Network, path) -> None:
    """npz archive: spec/key/sharpness as JSON plus every array bitwise.

    Zip entries carry a fixed timestamp so identical networks give
    identical files.
    """
    arrays = {f"param/{k}": v for k, v in network.parameters().items()}
    for i, b in enumerate(network.blocks):
        if b.bn is not None:
            arrays[f"bn/{i}/running_mean"] = b.bn.running_mean
            arrays[f"bn/{i}/running_var"] = b.bn.running_var
    meta = {
        "format": "sharpsearch-checkpoint-1",
        "spec": network.spec.to_dict(),
        "key": network.key.to_list(),
        "sharpness": [float(s) for s in network.sharpness],
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.ascontiguousarray(arr), allow_pickle=False)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path) -> Network:
    with np.load(Path(path)) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        spec = NetworkSpec.from_dict(meta["spec"])
        net = Network(spec)
        net.key = OutputKey(tuple(tuple(a) for a in meta["key"]), spec.num_outputs)
        params = net.parameters()
        for k in params:
            params[k][...] = z[f"param/{k}"]
        for i, b in enumerate(net.blocks):
            if b.bn is not None:
                b.bn.running_mean = z[f"bn/{i}/running_mean"].copy()
                b.bn.running_var = z[f"bn/{i}/running_var"].copy()
        net.set_sharpness(meta["sharpness"])
    return net
