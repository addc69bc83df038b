"""Domain types shared by every mining stage.

Labels are stored as integer indices into an :class:`OutputAlphabet`; label
sets are ``frozenset[int]``.  Interval preconditions hold one entry per
feature dimension, either a closed ``(lo, hi)`` pair or ``None`` for a free
(unconstrained) dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

Interval = tuple[float, float]
LabelSet = frozenset
RegionKey = tuple[int, ...]


class ConfigError(ValueError):
    """A configuration value is out of range."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _as_float_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class OutputAlphabet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("an output alphabet needs at least two labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in alphabet {labels}")

    @classmethod
    def sign(cls) -> "OutputAlphabet":
        return cls(("+", "-", "0"))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def full(self) -> frozenset:
        return frozenset(range(len(self.labels)))

    def index(self, name: str) -> int:
        return self.labels.index(str(name))

    def names(self, labels: Iterable[int]) -> list[str]:
        return [self.labels[i] for i in sorted(labels)]

    def to_dict(self) -> dict:
        return {"labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "OutputAlphabet":
        return cls(tuple(data["labels"]))


@dataclass(frozen=True)
class Observation:
    features: tuple[float, ...]
    output: int
    reference_id: str
    trace_id: str
    step: int


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ReferenceData:
    """Observations of a single reference, one row per windowed step."""

    name: str
    features: np.ndarray
    outputs: np.ndarray
    trace_ids: tuple[str, ...] = ()
    steps: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError(f"reference {self.name!r}: features must be 2-D")
        n = features.shape[0]
        outputs = np.asarray(self.outputs, dtype=np.int64).reshape(-1)
        if outputs.shape[0] != n:
            raise ValueError(f"reference {self.name!r}: {n} feature rows but {outputs.shape[0]} outputs")
        if not np.isfinite(features).all():
            raise ValueError(f"reference {self.name!r}: non-finite feature values")
        if n and outputs.min() < 0:
            raise ValueError(f"reference {self.name!r}: negative output label")
        trace_ids = tuple(str(t) for t in self.trace_ids) if len(self.trace_ids) else ("",) * n
        steps = np.arange(n, dtype=np.int64) if self.steps is None else np.asarray(self.steps, dtype=np.int64)
        if len(trace_ids) != n or steps.shape != (n,):
            raise ValueError(f"reference {self.name!r}: provenance length mismatch")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "outputs", _frozen(outputs))
        object.__setattr__(self, "trace_ids", trace_ids)
        object.__setattr__(self, "steps", _frozen(steps))

    def __len__(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceData):
            return NotImplemented
        return (
            self.name == other.name
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.outputs, other.outputs)
            and self.trace_ids == other.trace_ids
            and np.array_equal(self.steps, other.steps)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "features": self.features.tolist(),
            "outputs": self.outputs.tolist(),
            "trace_ids": list(self.trace_ids),
            "steps": self.steps.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping, d: int) -> "ReferenceData":
        features = np.asarray(data["features"], dtype=np.float64).reshape(-1, d)
        return cls(data["name"], features, data["outputs"], tuple(data["trace_ids"]), data["steps"])


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Per-reference observation collections sharing one feature space and alphabet."""

    references: tuple[ReferenceData, ...]
    alphabet: OutputAlphabet
    feature_names: tuple[str, ...]
    output_name: str = "output"
    # (scale, offset) per feature, applied as (x + offset) * scale at ingestion
    transforms: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        refs = tuple(self.references)
        names = tuple(str(n) for n in self.feature_names)
        if not refs:
            raise ValueError("an observation set needs at least one reference")
        if len({r.name for r in refs}) != len(refs):
            raise ValueError("duplicate reference names")
        d = len(names)
        k = len(self.alphabet)
        for ref in refs:
            if ref.features.shape[1] != d:
                raise ValueError(f"reference {ref.name!r} has {ref.features.shape[1]} features, expected {d}")
            if len(ref) and ref.outputs.max() >= k:
                raise ValueError(f"reference {ref.name!r} has an output label outside the alphabet")
        transforms = self.transforms
        if transforms is not None:
            transforms = tuple((float(s), float(o)) for s, o in transforms)
            if len(transforms) != d:
                raise ValueError("one transform per feature required")
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "transforms", transforms)

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def q(self) -> int:
        return len(self.references)

    @property
    def reference_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.references)

    def __len__(self) -> int:
        return sum(len(r) for r in self.references)

    def reference(self, name: str) -> ReferenceData:
        for ref in self.references:
            if ref.name == name:
                return ref
        raise KeyError(name)

    def all_features(self) -> np.ndarray:
        return np.concatenate([r.features for r in self.references], axis=0)

    @cached_property
    def observed_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension (min, max) over every reference's observations."""
        if len(self) == 0:
            raise ValueError("observed bounds of an empty observation set are undefined")
        x = self.all_features()
        return x.min(axis=0), x.max(axis=0)

    def observations(self) -> Iterator[Observation]:
        for ref in self.references:
            for i in range(len(ref)):
                yield Observation(
                    tuple(ref.features[i].tolist()),
                    int(ref.outputs[i]),
                    ref.name,
                    ref.trace_ids[i],
                    int(ref.steps[i]),
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.references == other.references
            and self.alphabet == other.alphabet
            and self.feature_names == other.feature_names
            and self.output_name == other.output_name
            and self.transforms == other.transforms
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet.to_dict(),
            "feature_names": list(self.feature_names),
            "output_name": self.output_name,
            "transforms": None if self.transforms is None else [list(t) for t in self.transforms],
            "references": [r.to_dict() for r in self.references],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ObservationSet":
        names = tuple(data["feature_names"])
        transforms = data.get("transforms")
        return cls(
            tuple(ReferenceData.from_dict(r, len(names)) for r in data["references"]),
            OutputAlphabet.from_dict(data["alphabet"]),
            names,
            data.get("output_name", "output"),
            None if transforms is None else tuple(tuple(t) for t in transforms),
        )


@dataclass(frozen=True)
class GridSpec:
    """Uniform partition of a box into ``parts`` cells per dimension.

    Cells are half-open ``[b_j, b_{j+1})`` except the last one along each
    dimension, which is closed so the upper face of the box is covered.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    parts: int

    def __post_init__(self):
        lower = _as_float_tuple(self.lower)
        upper = _as_float_tuple(self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if int(self.parts) != self.parts or self.parts < 1:
            raise ConfigError("parts", f"must be a positive integer, got {self.parts}")
        object.__setattr__(self, "parts", int(self.parts))
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"dimension {i}: non-finite bounds")
            if not lo < hi:
                raise ValueError(f"dimension {i} is degenerate: lower={lo} upper={hi}")

    @property
    def d(self) -> int:
        return len(self.lower)

    @cached_property
    def width(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / self.parts

    @cached_property
    def boundaries(self) -> np.ndarray:
        """(d, parts + 1) array of cell faces; the last face is exactly ``upper``."""
        j = np.arange(self.parts + 1, dtype=np.float64)
        faces = np.asarray(self.lower)[:, None] + j[None, :] * self.width[:, None]
        faces[:, -1] = self.upper
        return faces

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map points to cell index vectors.

        Returns ``(idx, inside)`` where ``idx`` is an ``(n, d)`` int64 array and
        ``inside`` flags the points within the box; rows of out-of-range
        points are set to -1.  Indices are corrected against
        :attr:`boundaries` so every located point satisfies
        ``faces[j] <= x < faces[j + 1]`` (``<=`` on the last cell).
        """
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        inside = ((x >= lower) & (x <= upper)).all(axis=1)
        with np.errstate(invalid="ignore"):
            raw = np.floor((x - lower) / self.width)
        raw = np.nan_to_num(raw, nan=-1.0, posinf=self.parts, neginf=-1.0)
        idx = np.clip(raw, 0, self.parts - 1).astype(np.int64)
        faces = self.boundaries
        dims = np.arange(self.d)
        low_face = faces[dims, idx]
        idx = np.where(x < low_face, idx - 1, idx)
        high_face = faces[dims, np.minimum(idx + 1, self.parts)]
        idx = np.where((x >= high_face) & (idx + 1 < self.parts), idx + 1, idx)
        idx = np.clip(idx, 0, self.parts - 1)
        idx[~inside] = -1
        return idx, inside

    def cell_box(self, key: Sequence[int]) -> tuple[Interval, ...]:
        faces = self.boundaries
        return tuple((float(faces[i, j]), float(faces[i, j + 1])) for i, j in enumerate(key))

    def index_box(self, lo: Sequence[int], hi: Sequence[int]) -> tuple[Interval, ...]:
        """Closed box spanning the cells ``lo..hi`` (inclusive) along each dimension."""
        faces = self.boundaries
        return tuple((float(faces[i, a]), float(faces[i, b + 1])) for i, (a, b) in enumerate(zip(lo, hi)))

    def is_face(self, dim: int, value: float) -> bool:
        return bool(np.any(self.boundaries[dim] == value))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "parts": self.parts}

    @classmethod
    def from_dict(cls, data: Mapping) -> "GridSpec":
        return cls(tuple(data["lower"]), tuple(data["upper"]), int(data["parts"]))


@dataclass(frozen=True)
class RegionEntry:
    counts: tuple[int, ...]
    outputs: tuple[frozenset, ...]

    @property
    def combined(self) -> frozenset:
        return frozenset().union(*self.outputs)

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "outputs": [sorted(o) for o in self.outputs]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "RegionEntry":
        return cls(tuple(int(c) for c in data["counts"]), tuple(frozenset(o) for o in data["outputs"]))


@dataclass(frozen=True)
class RegionTable:
    """Sparse map from cell index vectors to per-reference tallies.

    Keys are kept in lexicographic order, which is the canonical region
    order used everywhere downstream.
    """

    entries: Mapping[RegionKey, RegionEntry]
    num_references: int

    def __post_init__(self):
        ordered = {tuple(int(v) for v in k): self.entries[k] for k in sorted(self.entries)}
        for key, entry in ordered.items():
            if len(entry.counts) != self.num_references or len(entry.outputs) != self.num_references:
                raise ValueError(f"region {key}: expected {self.num_references} per-reference tallies")
        object.__setattr__(self, "entries", MappingProxyType(ordered))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RegionKey]:
        return iter(self.entries)

    def __contains__(self, key) -> bool:
        return tuple(key) in self.entries

    def __getitem__(self, key) -> RegionEntry:
        return self.entries[tuple(key)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegionTable):
            return NotImplemented
        return self.num_references == other.num_references and dict(self.entries) == dict(other.entries)

    __hash__ = None

    @property
    def keys(self) -> list[RegionKey]:
        return list(self.entries)

    def index_array(self, d: Optional[int] = None) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, d or 0), dtype=np.int64)
        return np.asarray(list(self.entries), dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "num_references": self.num_references,
            "regions": [{"index": list(k), **e.to_dict()} for k, e in self.entries.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RegionTable":
        entries = {tuple(r["index"]): RegionEntry.from_dict(r) for r in data["regions"]}
        return cls(entries, int(data["num_references"]))


@dataclass(frozen=True, eq=False)
class InterestingRegionTable(RegionTable):
    """Regions whose combined output set is a strict subset of the alphabet."""

    alphabet_size: int = 0

    def __post_init__(self):
        super().__post_init__()
        for key, entry in self.entries.items():
            combined = entry.combined
            if not combined or len(combined) >= self.alphabet_size:
                raise ValueError(f"region {key}: combined output set {sorted(combined)} is not a strict subset")

    def __eq__(self, other) -> bool:
        if not isinstance(other, InterestingRegionTable):
            return NotImplemented
        return self.alphabet_size == other.alphabet_size and RegionTable.__eq__(self, other)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "alphabet_size": self.alphabet_size}

    @classmethod
    def from_dict(cls, data: Mapping) -> "InterestingRegionTable":
        raw = RegionTable.from_dict(data)
        return cls(dict(raw.entries), raw.num_references, int(data["alphabet_size"]))


@dataclass(frozen=True)
class Specification:
    """Interval precondition mapped to an allowed output set.

    ``members`` records the cell index vectors of the generating cluster;
    hand-entered specifications carry none.
    """

    precondition: tuple[Optional[Interval], ...]
    postcondition: frozenset
    omega: frozenset = None
    members: tuple[RegionKey, ...] = ()

    def __post_init__(self):
        pre = []
        for i, iv in enumerate(self.precondition):
            if iv is None:
                pre.append(None)
                continue
            lo, hi = float(iv[0]), float(iv[1])
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"dimension {i}: invalid interval [{lo}, {hi}]")
            pre.append((lo, hi))
        post = frozenset(int(v) for v in self.postcondition)
        omega = post if self.omega is None else frozenset(int(v) for v in self.omega)
        if not post:
            raise ValueError("postcondition must allow at least one output")
        if not post <= omega:
            raise ValueError(f"postcondition {sorted(post)} is not within omega {sorted(omega)}")
        object.__setattr__(self, "precondition", tuple(pre))
        object.__setattr__(self, "postcondition", post)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "members", tuple(tuple(int(v) for v in m) for m in self.members))

    @property
    def d(self) -> int:
        return len(self.precondition)

    @property
    def size(self) -> int:
        return len(self.postcondition)

    def key(self) -> tuple:
        return (self.precondition, tuple(sorted(self.postcondition)))

    def bounds(self, grid: Optional[GridSpec] = None) -> tuple[np.ndarray, np.ndarray]:
        """Closed (lo, hi) arrays; free dimensions span the grid range, or the real line without one."""
        lo = np.empty(self.d)
        hi = np.empty(self.d)
        for i, iv in enumerate(self.precondition):
            if iv is None:
                lo[i] = grid.lower[i] if grid is not None else -np.inf
                hi[i] = grid.upper[i] if grid is not None else np.inf
            else:
                lo[i], hi[i] = iv
        return lo, hi

    def holds_at(self, x: Sequence[float]) -> bool:
        return all(iv is None or iv[0] <= v <= iv[1] for v, iv in zip(x, self.precondition))

    def to_dict(self) -> dict:
        return {
            "precondition": [None if iv is None else list(iv) for iv in self.precondition],
            "postcondition": sorted(self.postcondition),
            "omega": sorted(self.omega),
            "members": [list(m) for m in self.members],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Specification":
        return cls(
            tuple(None if iv is None else (iv[0], iv[1]) for iv in data["precondition"]),
            frozenset(data["postcondition"]),
            frozenset(data.get("omega", data["postcondition"])),
            tuple(tuple(m) for m in data.get("members", [])),
        )


CLUSTER_METRICS = ("chebyshev", "euclidean")
DISCRETIZERS = ("identity", "sign")


@dataclass(frozen=True)
class MinerConfig:
    tau_cov: float = 1.0
    tau_rep: float = 0.01
    tau_max: int = 2
    parts: int = 100
    importance_fraction: float = 1e-4
    importance_min_count: int = 2
    cluster_metric: str = "chebyshev"
    cluster_radius_override: Optional[float] = None
    history: int = 1
    discretizer: str = "identity"
    sign_deadband: float = 0.0
    # explicit grid bounds; observed min/max are used when absent
    lower: Optional[tuple[float, ...]] = None
    upper: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.lower is not None:
            object.__setattr__(self, "lower", _as_float_tuple(self.lower))
        if self.upper is not None:
            object.__setattr__(self, "upper", _as_float_tuple(self.upper))

    def to_dict(self) -> dict:
        return {
            "tau_cov": self.tau_cov,
            "tau_rep": self.tau_rep,
            "tau_max": self.tau_max,
            "parts": self.parts,
            "importance_fraction": self.importance_fraction,
            "importance_min_count": self.importance_min_count,
            "cluster_metric": self.cluster_metric,
            "cluster_radius_override": self.cluster_radius_override,
            "history": self.history,
            "discretizer": self.discretizer,
            "sign_deadband": self.sign_deadband,
            "lower": None if self.lower is None else list(self.lower),
            "upper": None if self.upper is None else list(self.upper),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MinerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        values = dict(data)
        for name in ("tau_max", "parts", "importance_min_count", "history"):
            if name in values and isinstance(values[name], float) and values[name].is_integer():
                values[name] = int(values[name])
        for name in ("lower", "upper"):
            if values.get(name) is not None:
                values[name] = tuple(values[name])
        return cls(**values)


def validate_config(config: MinerConfig, alphabet: OutputAlphabet) -> MinerConfig:
    """Return ``config`` unchanged if every field is in range, else raise ConfigError on the first bad field."""

    def real(name, value):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(name, f"must be a finite real, got {value!r}")

    def integer(name, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"must be an integer, got {value!r}")

    for name in ("tau_cov", "tau_rep"):
        value = getattr(config, name)
        real(name, value)
        if not 0 < value <= 1:
            raise ConfigError(name, f"must lie in (0, 1], got {value}")
    integer("tau_max", config.tau_max)
    k = len(alphabet)
    if not 1 <= config.tau_max <= k - 1:
        raise ConfigError("tau_max", f"must lie in [1, {k - 1}] for a {k}-label alphabet, got {config.tau_max}")
    integer("parts", config.parts)
    if config.parts < 1:
        raise ConfigError("parts", f"must be positive, got {config.parts}")
    real("importance_fraction", config.importance_fraction)
    if not 0 <= config.importance_fraction <= 1:
        raise ConfigError("importance_fraction", f"must lie in [0, 1], got {config.importance_fraction}")
    integer("importance_min_count", config.importance_min_count)
    if config.importance_min_count < 1:
        raise ConfigError("importance_min_count", "must be at least 1")
    if config.cluster_metric not in CLUSTER_METRICS:
        raise ConfigError("cluster_metric", f"must be one of {CLUSTER_METRICS}, got {config.cluster_metric!r}")
    if config.cluster_radius_override is not None:
        real("cluster_radius_override", config.cluster_radius_override)
        if config.cluster_radius_override <= 0:
            raise ConfigError("cluster_radius_override", "must be positive")
    integer("history", config.history)
    if config.history < 1:
        raise ConfigError("history", "must be positive")
    if config.discretizer not in DISCRETIZERS:
        raise ConfigError("discretizer", f"must be one of {DISCRETIZERS}, got {config.discretizer!r}")
    real("sign_deadband", config.sign_deadband)
    if config.sign_deadband < 0:
        raise ConfigError("sign_deadband", "must be non-negative")
    if (config.lower is None) != (config.upper is None):
        raise ConfigError("lower", "explicit grid bounds need both lower and upper")
    if config.lower is not None:
        if len(config.lower) != len(config.upper):
            raise ConfigError("upper", "lower and upper differ in length")
        for i, (lo, hi) in enumerate(zip(config.lower, config.upper)):
            if not lo < hi:
                raise ConfigError("lower", f"dimension {i}: lower {lo} is not below upper {hi}")
    return config


@dataclass(frozen=True)
class MiningStats:
    n_regions: int = 0
    n_important: int = 0
    n_interesting: int = 0
    n_out_of_grid: int = 0
    min_samples: int = 0
    radius: float = 0.0
    omegas_visited: int = 0
    dropped_low_representation: int = 0
    coverage: Optional[float] = None
    early_exit: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Mapping) -> "MiningStats":
        return cls(**data)


@dataclass(frozen=True)
class SpecificationSet:
    specs: tuple[Specification, ...]
    config: MinerConfig
    grid: GridSpec
    alphabet: OutputAlphabet
    feature_names: tuple[str, ...] = ()
    output_name: str = "output"
    transforms: Optional[tuple[tuple[float, float], ...]] = None
    stats: Optional[MiningStats] = None

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(self.grid.d))
        if len(names) != self.grid.d:
            raise ValueError(f"{len(names)} feature names for a {self.grid.d}-D grid")
        object.__setattr__(self, "feature_names", names)
        if self.transforms is not None:
            object.__setattr__(self, "transforms", tuple((float(s), float(o)) for s, o in self.transforms))
        for s in self.specs:
            if s.d != self.grid.d:
                raise ValueError(f"specification of dimension {s.d} in a {self.grid.d}-D set")

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self) -> Iterator[Specification]:
        return iter(self.specs)

    def with_specs(self, specs: Iterable[Specification]) -> "SpecificationSet":
        return replace(self, specs=tuple(specs))

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet.to_dict(),
            "config": self.config.to_dict(),
            "feature_names": list(self.feature_names),
            "grid": self.grid.to_dict(),
            "output_name": self.output_name,
            "specs": [s.to_dict() for s in self.specs],
            "stats": None if self.stats is None else self.stats.to_dict(),
            "transforms": None if self.transforms is None else [list(t) for t in self.transforms],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SpecificationSet":
        transforms = data.get("transforms")
        stats = data.get("stats")
        return cls(
            tuple(Specification.from_dict(s) for s in data["specs"]),
            MinerConfig.from_dict(data.get("config", {})),
            GridSpec.from_dict(data["grid"]),
            OutputAlphabet.from_dict(data["alphabet"]),
            tuple(data.get("feature_names", ())),
            data.get("output_name", "output"),
            None if transforms is None else tuple(tuple(t) for t in transforms),
            None if stats is None else MiningStats.from_dict(stats),
        )


def check_specification_set(spec_set: SpecificationSet) -> list[str]:
    """List every violated structural invariant (empty when the set is well formed).

    Invariants that depend on provenance (grid snapping, bounding box of
    members) are only checked for specifications that record members.
    """
    problems = []
    grid = spec_set.grid
    tau_max = spec_set.config.tau_max
    k = len(spec_set.alphabet)
    seen = set()
    for n, spec in enumerate(spec_set.specs, start=1):
        where = f"spec {n}"
        if not 1 <= spec.size <= tau_max:
            problems.append(f"{where}: {spec.size} allowed outputs exceeds tau_max={tau_max}")
        if max(spec.omega) >= k:
            problems.append(f"{where}: label outside the alphabet")
        key = spec.key()
        if key in seen:
            problems.append(f"{where}: duplicate of an earlier specification")
        seen.add(key)
        if not spec.members:
            continue
        members = np.asarray(spec.members, dtype=np.int64)
        if members.shape[1] != grid.d or members.min() < 0 or members.max() >= grid.parts:
            problems.append(f"{where}: member index outside the grid")
            continue
        expected = grid.index_box(members.min(axis=0), members.max(axis=0))
        for i, iv in enumerate(spec.precondition):
            if iv is None:
                problems.append(f"{where}: dimension {i} free despite recorded members")
            elif iv != expected[i]:
                problems.append(f"{where}: dimension {i} interval {iv} is not the members' bounding box {expected[i]}")
            elif not (grid.is_face(i, iv[0]) and grid.is_face(i, iv[1])):
                problems.append(f"{where}: dimension {i} endpoints are off the grid faces")
    return problems


@dataclass(frozen=True)
class ReferenceMetrics:
    name: str
    total: int
    covered: int
    satisfying: int

    @property
    def support(self) -> Optional[float]:
        return None if self.total == 0 else self.covered / self.total

    @property
    def confidence(self) -> Optional[float]:
        return None if self.covered == 0 else self.satisfying / self.covered

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "total": self.total,
            "covered": self.covered,
            "satisfying": self.satisfying,
            "support": self.support,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReferenceMetrics":
        return cls(data["name"], int(data["total"]), int(data["covered"]), int(data["satisfying"]))


@dataclass(frozen=True)
class EvalReport:
    """Metric results for one specification set on one or more datasets.

    ``None`` marks an undefined value (empty dataset, nothing covered, or
    no region table supplied).
    """

    references: tuple[ReferenceMetrics, ...]
    volume: float
    coverage: Optional[float] = None
    representation: Optional[tuple[float, ...]] = None
    split: str = "train"

    @property
    def total(self) -> int:
        return sum(r.total for r in self.references)

    @property
    def covered(self) -> int:
        return sum(r.covered for r in self.references)

    @property
    def satisfying(self) -> int:
        return sum(r.satisfying for r in self.references)

    def reference(self, name: str) -> ReferenceMetrics:
        for r in self.references:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "references": [r.to_dict() for r in self.references],
            "volume": self.volume,
            "coverage": self.coverage,
            "representation": None if self.representation is None else list(self.representation),
            "counts": {"total": self.total, "covered": self.covered, "satisfying": self.satisfying},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        rep = data.get("representation")
        return cls(
            tuple(ReferenceMetrics.from_dict(r) for r in data["references"]),
            float(data["volume"]),
            data.get("coverage"),
            None if rep is None else tuple(float(v) for v in rep),
            data.get("split", "train"),
        )
