"""Finite mixed categorical / numeric-discrete hyperparameter spaces.

A space is an ordered list of :class:`HyperparameterSpec`.  Configurations
are immutable name -> option maps; internally most hot paths work on
option-index vectors so that whole candidate sets can be encoded at once.

Space definition files are line oriented::

    # comment
    lr        numeric      0.0001, 0.001, 0.01, 0.1, 1
    optimizer categorical  adadelta, rmsprop

i.e. ``<name> <kind> <comma separated options>``.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "SpaceError",
    "SpaceParseError",
    "CardinalityError",
    "HyperparameterSpec",
    "SearchSpace",
    "Configuration",
    "format_value",
    "load_space",
    "parse_space",
]

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_OPTION_RE = re.compile(r"^[^\s=,#]+$")
_KINDS = ("categorical", "numeric")
_MAX_CARDINALITY = 2**63 - 1
DECODE_TOL = 1e-9


class SpaceError(ValueError):
    """Invalid space, configuration or encoded point."""


class CardinalityError(SpaceError):
    """The space is too large for the requested exhaustive operation."""

    def __init__(self, cardinality: int, limit: int):
        self.cardinality = cardinality
        self.limit = limit
        super().__init__(f"search space has {cardinality} configurations, more than the limit of {limit}")


class SpaceParseError(SpaceError):
    def __init__(self, lineno: int, message: str, source: str = "<string>"):
        self.lineno = lineno
        self.source = source
        super().__init__(f"{source}:{lineno}: {message}")


def format_value(value) -> str:
    """Canonical text for an option; floats round-trip through ``float()``."""
    if isinstance(value, str):
        return value
    v = float(value)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class HyperparameterSpec:
    name: str
    kind: str
    options: tuple

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise SpaceError(f"invalid hyperparameter name {self.name!r}")
        if self.kind not in _KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        opts = tuple(self.options)
        if not opts:
            raise SpaceError(f"{self.name}: empty option list")
        if self.kind == "numeric":
            opts = tuple(float(v) for v in opts)
            if not all(math.isfinite(v) for v in opts):
                raise SpaceError(f"{self.name}: non-finite numeric option")
            if any(b <= a for a, b in zip(opts, opts[1:])):
                raise SpaceError(f"{self.name}: numeric options must be strictly increasing")
        else:
            opts = tuple(str(v) for v in opts)
            for o in opts:
                if not _OPTION_RE.match(o):
                    raise SpaceError(f"{self.name}: invalid categorical option {o!r}")
            if len(set(opts)) != len(opts):
                raise SpaceError(f"{self.name}: duplicate options")
        object.__setattr__(self, "options", opts)

    @classmethod
    def categorical(cls, name: str, options: Sequence[str]) -> "HyperparameterSpec":
        return cls(name, "categorical", tuple(options))

    @classmethod
    def numeric(cls, name: str, values: Sequence[float]) -> "HyperparameterSpec":
        return cls(name, "numeric", tuple(values))

    @property
    def size(self) -> int:
        return len(self.options)

    @property
    def width(self) -> int:
        """Number of encoded coordinates this spec occupies."""
        return 1 if self.kind == "numeric" else len(self.options)

    def index(self, value) -> int:
        """Position of ``value`` in the option list.

        Numeric specs accept any float equal to an option; strings are
        parsed first so that values read back from text files match.
        """
        if self.kind == "numeric":
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise SpaceError(f"{self.name}: {value!r} is not numeric") from None
            for i, o in enumerate(self.options):
                if o == v:
                    return i
        else:
            v = str(value)
            for i, o in enumerate(self.options):
                if o == v:
                    return i
            # tolerate case differences in hand-written logs (RMSProp vs RMSprop)
            lowered = [o.lower() for o in self.options]
            if lowered.count(v.lower()) == 1:
                return lowered.index(v.lower())
        raise SpaceError(f"{self.name}: {value!r} not among options {self.labels}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(format_value(o) for o in self.options)


class Configuration(Mapping):
    """Immutable assignment of one option per hyperparameter.

    Hashable and ordered by the space the configuration was built from.
    """

    __slots__ = ("_names", "_values", "_hash")

    def __init__(self, names: Sequence[str], values: Sequence):
        names = tuple(names)
        values = tuple(values)
        if len(names) != len(values):
            raise SpaceError("names and values differ in length")
        self._names = names
        self._values = values
        self._hash = hash((names, values))

    def __getitem__(self, key):
        try:
            return self._values[self._names.index(key)]
        except ValueError:
            raise KeyError(key) from None

    def __iter__(self):
        return iter(self._names)

    def __len__(self):
        return len(self._names)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Configuration):
            return self._names == other._names and self._values == other._values
        return NotImplemented

    def __repr__(self):
        inner = ", ".join(f"{n}={format_value(v)}" for n, v in zip(self._names, self._values))
        return f"Configuration({inner})"

    @property
    def values_tuple(self) -> tuple:
        return self._values

    def to_pairs(self) -> str:
        """``name=value`` pairs separated by single spaces, in spec order."""
        return " ".join(f"{n}={format_value(v)}" for n, v in zip(self._names, self._values))

    def replace(self, **changes) -> "Configuration":
        unknown = set(changes) - set(self._names)
        if unknown:
            raise KeyError(", ".join(sorted(unknown)))
        return Configuration(self._names, [changes.get(n, v) for n, v in zip(self._names, self._values)])


class SearchSpace:
    """Ordered, immutable collection of hyperparameter specs."""

    def __init__(self, specs: Sequence[HyperparameterSpec]):
        specs = tuple(specs)
        if not specs:
            raise SpaceError("a search space needs at least one hyperparameter")
        names = [s.name for s in specs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SpaceError(f"duplicate hyperparameter names: {', '.join(dupes)}")
        self._specs = specs
        self._names = tuple(names)
        self._by_name = {s.name: s for s in specs}

    def __repr__(self):
        return f"SearchSpace({', '.join(self._names)})"

    def __eq__(self, other):
        return isinstance(other, SearchSpace) and self._specs == other._specs

    def __hash__(self):
        return hash(self._specs)

    def __len__(self):
        return len(self._specs)

    def __iter__(self):
        return iter(self._specs)

    def __getitem__(self, name: str) -> HyperparameterSpec:
        return self._by_name[name]

    @property
    def specs(self) -> tuple[HyperparameterSpec, ...]:
        return self._specs

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self._specs], dtype=np.int64)

    @property
    def dim(self) -> int:
        return sum(s.width for s in self._specs)

    def cardinality(self) -> int:
        """Product of option counts; raises rather than exceed int64."""
        total = 1
        for s in self._specs:
            total *= s.size
            if total > _MAX_CARDINALITY:
                raise OverflowError(f"search-space cardinality exceeds {_MAX_CARDINALITY}")
        return total

    # --- configurations <-> index vectors -------------------------------

    def config(self, mapping: Mapping | None = None, **kwargs) -> Configuration:
        """Build a validated configuration from a name -> value mapping."""
        data = dict(mapping or {}, **kwargs)
        missing = [n for n in self._names if n not in data]
        extra = sorted(set(data) - set(self._names))
        if missing:
            raise SpaceError(f"missing hyperparameters: {', '.join(missing)}")
        if extra:
            raise SpaceError(f"unknown hyperparameters: {', '.join(extra)}")
        idx = [s.index(data[s.name]) for s in self._specs]
        return self.from_indices(idx)

    def from_indices(self, indices: Sequence[int]) -> Configuration:
        if len(indices) != len(self._specs):
            raise SpaceError("index vector has wrong length")
        values = []
        for s, i in zip(self._specs, indices):
            i = int(i)
            if not 0 <= i < s.size:
                raise SpaceError(f"{s.name}: option index {i} out of range")
            values.append(s.options[i])
        return Configuration(self._names, values)

    def indices(self, config: Mapping) -> np.ndarray:
        """Option-index vector of ``config``; validates membership."""
        if isinstance(config, Configuration) and tuple(config) != self._names:
            raise SpaceError("configuration belongs to a different space")
        if set(config) != set(self._names):
            raise SpaceError("configuration does not assign exactly this space's hyperparameters")
        return np.array([s.index(config[s.name]) for s in self._specs], dtype=np.int64)

    def contains(self, config: Mapping) -> bool:
        try:
            self.indices(config)
        except SpaceError:
            return False
        return True

    def parse_pairs(self, text: str) -> Configuration:
        """Inverse of :meth:`Configuration.to_pairs`."""
        data = {}
        for tok in text.split():
            name, sep, value = tok.partition("=")
            if not sep:
                raise SpaceError(f"expected name=value, got {tok!r}")
            if name in data:
                raise SpaceError(f"{name} assigned twice")
            data[name] = value
        return self.config(data)

    # --- enumeration and sampling ---------------------------------------

    def enumerate(self, limit: int) -> Iterator[Configuration]:
        """Yield every configuration, last spec varying fastest.

        Refuses (before yielding anything) when the space is larger than
        ``limit``.
        """
        n = self.cardinality()
        if n > limit:
            raise CardinalityError(n, limit)
        return self._enumerate()

    def _enumerate(self) -> Iterator[Configuration]:
        for idx in np.ndindex(*self.sizes):
            yield self.from_indices(idx)

    def enumerate_indices(self, limit: int) -> np.ndarray:
        """All index vectors as a ``(cardinality, len(space))`` array, same order as :meth:`enumerate`."""
        n = self.cardinality()
        if n > limit:
            raise CardinalityError(n, limit)
        grids = np.meshgrid(*[np.arange(k) for k in self.sizes], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, self.sizes, size=(n, len(self._specs)))

    def sample_uniform(self, rng: np.random.Generator) -> Configuration:
        return self.from_indices(self.sample_indices(rng, 1)[0])

    # --- numeric encoding -----------------------------------------------

    def encode(self, config: Mapping) -> np.ndarray:
        return self.encode_indices(self.indices(config)[None, :])[0]

    def encode_indices(self, idx: np.ndarray) -> np.ndarray:
        """Vectorised encoding of an ``(n, len(space))`` index array."""
        idx = np.asarray(idx, dtype=np.int64)
        out = np.zeros((idx.shape[0], self.dim))
        col = 0
        for j, s in enumerate(self._specs):
            if s.kind == "numeric":
                if s.size > 1:
                    out[:, col] = idx[:, j] / (s.size - 1)
                col += 1
            else:
                out[np.arange(idx.shape[0]), col + idx[:, j]] = 1.0
                col += s.size
        return out

    def decode(self, point: Sequence[float]) -> Configuration:
        """Nearest rank for numeric blocks, argmax for one-hot blocks."""
        x = np.asarray(point, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise SpaceError(f"encoded point has dimension {x.shape}, expected ({self.dim},)")
        if np.any(x < -DECODE_TOL) or np.any(x > 1 + DECODE_TOL) or not np.all(np.isfinite(x)):
            raise SpaceError("encoded coordinate outside [0, 1]")
        idx = []
        col = 0
        for s in self._specs:
            if s.kind == "numeric":
                idx.append(int(round(x[col] * (s.size - 1))) if s.size > 1 else 0)
                col += 1
            else:
                idx.append(int(np.argmax(x[col:col + s.size])))
                col += s.size
        return self.from_indices(idx)

    # --- text form -------------------------------------------------------

    def to_text(self) -> str:
        width = max(len(n) for n in self._names)
        lines = [f"{s.name:<{width}}  {s.kind:<11}  {', '.join(s.labels)}" for s in self._specs]
        return "\n".join(lines) + "\n"


def parse_space(text: str, source: str = "<string>") -> SearchSpace:
    specs = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) < 3:
            raise SpaceParseError(lineno, "expected '<name> <kind> <options>'", source)
        name, kind, rest = parts
        if name in seen:
            raise SpaceParseError(lineno, f"{name} already defined on line {seen[name]}", source)
        options = [o.strip() for o in rest.split(",")]
        if any(not o for o in options):
            raise SpaceParseError(lineno, "empty option", source)
        try:
            if kind == "numeric":
                try:
                    values = [float(o) for o in options]
                except ValueError as exc:
                    raise SpaceError(f"{name}: {exc}") from None
                spec = HyperparameterSpec.numeric(name, values)
            else:
                spec = HyperparameterSpec(name, kind, tuple(options))
        except SpaceError as exc:
            raise SpaceParseError(lineno, str(exc), source) from None
        seen[name] = lineno
        specs.append(spec)
    if not specs:
        raise SpaceParseError(0, "no hyperparameters defined", source)
    return SearchSpace(specs)


def load_space(path) -> SearchSpace:
    path = Path(path)
    return parse_space(path.read_text(), source=str(path))
