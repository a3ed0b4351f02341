"""Value types shared by every module.

All types are immutable once built: arrays are copied on construction and
flagged read-only, so instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ArgumentError, ConfigurationError, ShapeError

INT8_MIN, INT8_MAX = -128, 127

# stable wire encoding of the three keyword classes
CLASS_NAMES = {0: "backward", 1: "follow", 2: "forward"}
CLASS_IDS = {name: cid for cid, name in CLASS_NAMES.items()}


def _frozen(array, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def class_id(value) -> int:
    """Accept either a numeric id or one of the named classes."""
    if isinstance(value, str):
        if value in CLASS_IDS:
            return CLASS_IDS[value]
        return int(value)
    return int(value)


def _check_labels(labels: np.ndarray, n: int, roster: tuple[int, ...]):
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    unknown = set(np.unique(labels).tolist()) - set(roster)
    if unknown:
        raise ArgumentError(f"labels {sorted(unknown)} not in class roster {list(roster)}")


def _roster(class_roster, labels) -> tuple[int, ...]:
    if class_roster is None:
        return tuple(sorted(set(np.asarray(labels).tolist())))
    roster = tuple(int(c) for c in class_roster)
    if len(set(roster)) != len(roster):
        raise ArgumentError(f"duplicate classes in roster {roster}")
    return roster


@dataclass(frozen=True, eq=False)
class Int8FeatureDataset:
    features: np.ndarray
    labels: np.ndarray
    class_roster: tuple[int, ...] = None

    def __post_init__(self):
        raw = np.asarray(self.features)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ShapeError(f"features must be a non-empty n x D matrix, got {raw.shape}")
        if raw.size and (raw.min() < INT8_MIN or raw.max() > INT8_MAX):
            raise ArgumentError("feature values outside int8 range")
        labels = _frozen(self.labels, np.int64)
        roster = _roster(self.class_roster, labels)
        _check_labels(labels, raw.shape[0], roster)
        object.__setattr__(self, "features", _frozen(raw, np.int8))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_roster", roster)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Int8FeatureDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Int8FeatureDataset(self.features[rows], self.labels[rows], self.class_roster)

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def __eq__(self, other):
        if not isinstance(other, Int8FeatureDataset):
            return NotImplemented
        return (
            self.class_roster == other.class_roster
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    bits: np.ndarray
    labels: np.ndarray
    class_roster: tuple[int, ...] = None

    def __post_init__(self):
        raw = np.asarray(self.bits)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ShapeError(f"bits must be a non-empty n x D matrix, got {raw.shape}")
        if raw.size and not np.isin(raw, (0, 1)).all():
            raise ArgumentError("binary dataset values must be 0 or 1")
        labels = _frozen(self.labels, np.int64)
        roster = _roster(self.class_roster, labels)
        _check_labels(labels, raw.shape[0], roster)
        object.__setattr__(self, "bits", _frozen(raw, np.uint8))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_roster", roster)

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def dim(self) -> int:
        return self.bits.shape[1]

    def subset(self, rows) -> "BinaryDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return BinaryDataset(self.bits[rows], self.labels[rows], self.class_roster)

    def __eq__(self, other):
        if not isinstance(other, BinaryDataset):
            return NotImplemented
        return (
            self.class_roster == other.class_roster
            and np.array_equal(self.bits, other.bits)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def concat_datasets(parts):
    """Row-wise concatenation; rosters are merged in ascending class order."""
    parts = list(parts)
    if not parts:
        raise ArgumentError("nothing to concatenate")
    roster = tuple(sorted(set().union(*(p.class_roster for p in parts))))
    labels = np.concatenate([p.labels for p in parts])
    if isinstance(parts[0], BinaryDataset):
        return BinaryDataset(np.vstack([p.bits for p in parts]), labels, roster)
    return Int8FeatureDataset(np.vstack([p.features for p in parts]), labels, roster)


class ClassBlockedWeights:
    """int8 neuron rows grouped by class, blocks in ascending class order."""

    __slots__ = ("_blocks", "dim")

    def __init__(self, blocks, dim: int):
        items = blocks.items() if isinstance(blocks, Mapping) else blocks
        seen = {}
        for cid, rows in items:
            cid = int(cid)
            if cid in seen:
                raise ArgumentError(f"class {cid} appears twice")
            arr = np.asarray(rows)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ShapeError(f"class {cid} block must have >= 1 row, got shape {arr.shape}")
            if arr.shape[1] != dim:
                raise ShapeError(f"class {cid} block has {arr.shape[1]} columns, expected {dim}")
            if arr.size and (arr.min() < INT8_MIN or arr.max() > INT8_MAX):
                raise ArgumentError(f"class {cid} block has values outside int8 range")
            seen[cid] = _frozen(arr, np.int8)
        self._blocks = tuple(sorted(seen.items()))
        self.dim = int(dim)

    @property
    def blocks(self) -> tuple[tuple[int, np.ndarray], ...]:
        return self._blocks

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self._blocks)

    def row_counts(self) -> dict[int, int]:
        return {c: rows.shape[0] for c, rows in self._blocks}

    def as_dict(self) -> dict[int, np.ndarray]:
        return dict(self._blocks)

    def matrix(self) -> np.ndarray:
        """All rows stacked in block order (empty ``0 x D`` if no blocks)."""
        if not self._blocks:
            return np.zeros((0, self.dim), dtype=np.int8)
        return np.vstack([rows for _, rows in self._blocks])

    def with_block(self, c: int, rows) -> "ClassBlockedWeights":
        d = self.as_dict()
        d[int(c)] = rows
        return ClassBlockedWeights(d, self.dim)

    def __eq__(self, other):
        if not isinstance(other, ClassBlockedWeights):
            return NotImplemented
        if self.dim != other.dim or self.class_ids != other.class_ids:
            return False
        return all(np.array_equal(a, b) for (_, a), (_, b) in zip(self._blocks, other._blocks))

    __hash__ = None

    def __repr__(self):
        counts = ", ".join(f"{c}:{n}" for c, n in self.row_counts().items())
        return f"ClassBlockedWeights(dim={self.dim}, rows={{{counts}}})"


def block_lookup(w: ClassBlockedWeights, c: int):
    """Rows for class ``c`` or ``None`` when the class has no block."""
    for cid, rows in w.blocks:
        if cid == c:
            return rows
    return None


def payload_bytes(w: ClassBlockedWeights) -> int:
    """Weight bytes on the wire: one byte per int8 element, no framing."""
    return sum(rows.size for _, rows in w.blocks)


class ClassOwnership:
    """class id -> node ids that trained that class locally."""

    __slots__ = ("_owners",)

    def __init__(self, owners: Mapping[int, Iterable]):
        table = {}
        for c, nodes in owners.items():
            nodes = frozenset(nodes)
            if not nodes:
                raise ConfigurationError(f"class {c} has no owner")
            table[int(c)] = nodes
        self._owners = dict(sorted(table.items()))

    def owners(self, c: int) -> frozenset:
        return self._owners.get(int(c), frozenset())

    def classes(self) -> tuple[int, ...]:
        return tuple(self._owners)

    def owned_by(self, node) -> tuple[int, ...]:
        return tuple(c for c, nodes in self._owners.items() if node in nodes)

    def nodes(self) -> frozenset:
        return frozenset().union(*self._owners.values()) if self._owners else frozenset()

    def is_shared(self, c: int) -> bool:
        return len(self.owners(c)) > 1

    def as_dict(self) -> dict[int, frozenset]:
        return dict(self._owners)

    def __eq__(self, other):
        return isinstance(other, ClassOwnership) and self._owners == other._owners

    __hash__ = None

    def __repr__(self):
        inner = ", ".join(f"{c}: {sorted(n, key=str)}" for c, n in self._owners.items())
        return f"ClassOwnership({{{inner}}})"
