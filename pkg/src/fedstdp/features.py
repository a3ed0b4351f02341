"""Feature sources: synthetic generator, wide projection, non-IID partitions.

The synthetic generator stands in for the keyword-spotting feature
extractor.  Its ``separation`` knob plays the role of extractor quality:

=========  ======================  ====================================
quality    extractor it emulates   separation
=========  ======================  ====================================
low        original (no tuning)    ``QUALITY_SEPARATION["low"]``
medium     disjoint-class tuned    ``QUALITY_SEPARATION["medium"]``
high       target-class tuned      ``QUALITY_SEPARATION["high"]``
=========  ======================  ====================================

The separations are frozen results of :func:`fedstdp.calibration.calibrate`
at ``DEFAULT_NOISE_SIGMA``; see that module for the targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import INT8_MAX, INT8_MIN, ClassOwnership, Int8FeatureDataset
from .errors import ConfigurationError, PartitionError, ShapeError
from .fstd import load_features  # noqa: F401  (re-exported ingestion path)
from .rng import SeededRng

DEFAULT_NOISE_SIGMA = 32.0
BASE_DIM = 64
# frozen output of calibration.calibrate(); regenerate with `fedstdp phase A`
QUALITY_SEPARATION = {"low": 18.21, "medium": 24.66, "high": 31.12}


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_int8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), INT8_MIN, INT8_MAX).astype(np.int8)


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class clusters in int8 feature space.

    Class means are ``separation * N(0, I_D)``, so the expected distance
    between two means is ``separation * sqrt(2 D)``; samples add isotropic
    ``N(0, noise_sigma^2)`` noise before rounding and clamping.
    """

    n_classes: int = 3
    dim: int = BASE_DIM
    samples_per_class: int = 250
    separation: float = 0.0
    noise_sigma: float = DEFAULT_NOISE_SIGMA

    def validate(self):
        if self.n_classes < 1:
            raise ConfigurationError("synthetic spec needs at least one class")
        if self.dim < 1:
            raise ConfigurationError("synthetic spec needs dim >= 1")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be >= 1")
        if not np.isfinite(self.separation) or self.separation < 0:
            raise ConfigurationError("separation must be finite and >= 0")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma <= 0:
            raise ConfigurationError("noise_sigma must be finite and > 0")

    @classmethod
    def for_quality(cls, quality: str, **overrides) -> "SyntheticSpec":
        if quality not in QUALITY_SEPARATION:
            raise ConfigurationError(f"unknown quality {quality!r}; choose from {sorted(QUALITY_SEPARATION)}")
        return cls(separation=QUALITY_SEPARATION[quality], **overrides)


def generate_synthetic(spec: SyntheticSpec, rng: SeededRng) -> Int8FeatureDataset:
    spec.validate()
    d, m = spec.dim, spec.samples_per_class
    means = spec.separation * rng.normals(spec.n_classes * d).reshape(spec.n_classes, d)
    rows = []
    for c in range(spec.n_classes):
        noise = spec.noise_sigma * rng.normals(m * d).reshape(m, d)
        rows.append(to_int8(means[c][None, :] + noise))
    labels = np.repeat(np.arange(spec.n_classes), m)
    return Int8FeatureDataset(np.vstack(rows), labels, tuple(range(spec.n_classes)))


# -- wide projection -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """Real ``D_in x D_wide`` projection plus the affine int8 re-quantization.

    ``scale``/``zero_point`` left as ``None`` are calibrated per dataset so the
    1st-99th percentile range of projected values spans the int8 range.
    """

    weights: np.ndarray
    scale: float | None = None
    zero_point: int | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise ShapeError(f"projection weights must be 2-D, got {w.shape}")
        if w.shape[1] <= w.shape[0]:
            raise ConfigurationError(f"wide projection must widen: {w.shape[0]} -> {w.shape[1]}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def d_in(self) -> int:
        return self.weights.shape[0]

    @property
    def d_wide(self) -> int:
        return self.weights.shape[1]


def random_projection(d_wide: int, rng: SeededRng, d_in: int = BASE_DIM) -> ProjectionMatrix:
    w = rng.normals(d_in * d_wide).reshape(d_in, d_wide) / np.sqrt(d_in)
    return ProjectionMatrix(w)


def projection_real(features: np.ndarray, proj: ProjectionMatrix) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) @ proj.weights


def quantization_params(z: np.ndarray) -> tuple[float, int]:
    lo, hi = np.percentile(z, [1.0, 99.0])
    span = hi - lo
    scale = span / 255.0 if span > 0 else 1.0
    zero_point = int(round_half_away(np.array(-128.0 - lo / scale)))
    return float(scale), zero_point


def project_wide(ds: Int8FeatureDataset, proj: ProjectionMatrix) -> Int8FeatureDataset:
    if ds.dim != proj.d_in:
        raise ShapeError(f"projection expects {proj.d_in} input features, dataset has {ds.dim}")
    z = projection_real(ds.features, proj)
    if proj.scale is None:
        scale, zero_point = quantization_params(z)
    else:
        scale, zero_point = proj.scale, int(proj.zero_point or 0)
    q = np.clip(round_half_away(z / scale) + zero_point, INT8_MIN, INT8_MAX).astype(np.int8)
    return Int8FeatureDataset(q, ds.labels, ds.class_roster)


# -- non-IID partitioning --------------------------------------------------

@dataclass(frozen=True)
class PartitionPlan:
    """Per-node class allocations plus the shared evaluation budget.

    Train and eval indices are always disjoint within a class.
    """

    allocations: Mapping[int, Mapping[int, int]]
    eval_per_class: int = 100
    overlap: str = "disjoint"

    def __post_init__(self):
        if self.overlap != "disjoint":
            raise ConfigurationError("only disjoint partitions are supported")
        alloc = {int(n): {int(c): int(k) for c, k in a.items() if int(k) > 0} for n, a in self.allocations.items()}
        if any(k < 0 for a in alloc.values() for k in a.values()) or self.eval_per_class < 0:
            raise ConfigurationError("allocations must be non-negative")
        object.__setattr__(self, "allocations", dict(sorted(alloc.items())))

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(self.allocations)

    def ownership(self) -> ClassOwnership:
        owners: dict[int, set] = {}
        for node, alloc in self.allocations.items():
            for c in alloc:
                owners.setdefault(c, set()).add(node)
        return ClassOwnership(owners)

    def shared_classes(self) -> tuple[int, ...]:
        own = self.ownership()
        return tuple(c for c in own.classes() if own.is_shared(c))

    def demand(self, c: int) -> int:
        return self.eval_per_class + sum(a.get(c, 0) for a in self.allocations.values())

    @classmethod
    def paired(cls, n_nodes: int = 2, per_class: int = 50, eval_per_class: int = 100,
               shared: int = 0, exclusive=(1, 2)) -> "PartitionPlan":
        """The shared-plus-exclusive layout; node ``i`` gets ``exclusive[i % 2]``.

        ``n_nodes=2, per_class=50`` is the two-board layout; ``n_nodes=4,
        per_class=25`` realizes four virtual nodes as two sequential pairs.
        """
        alloc = {i: {shared: per_class, exclusive[i % len(exclusive)]: per_class} for i in range(n_nodes)}
        return cls(alloc, eval_per_class)


@dataclass(frozen=True, eq=False)
class Partition:
    train: dict
    eval: Int8FeatureDataset
    train_indices: dict = field(default_factory=dict)
    eval_indices: np.ndarray = None


def partition_noniid(ds: Int8FeatureDataset, plan: PartitionPlan, rng: SeededRng) -> Partition:
    """Seeded shuffle per class; eval rows are taken first, then nodes in order.

    Because eval rows come off the top of each class shuffle, two plans with
    the same eval budget and seed share the same evaluation set.
    """
    node_rows = {n: [] for n in plan.nodes}
    eval_rows = []
    for c in ds.class_roster:
        idx = ds.class_indices(c)
        need = plan.demand(c)
        if need > idx.shape[0]:
            raise PartitionError(
                f"class {c} needs {need} samples ({plan.eval_per_class} eval + train) but only {idx.shape[0]} exist",
                class_id=c,
            )
        shuffled = idx[rng.permutation(idx.shape[0])]
        eval_rows.append(shuffled[:plan.eval_per_class])
        pos = plan.eval_per_class
        for node in plan.nodes:
            k = plan.allocations[node].get(c, 0)
            node_rows[node].append(shuffled[pos:pos + k])
            pos += k
    train, indices = {}, {}
    for node, parts in node_rows.items():
        rows = np.concatenate(parts) if parts else np.zeros(0, np.int64)
        indices[node] = rows
        train[node] = ds.subset(rows)
    eval_idx = np.concatenate(eval_rows)
    return Partition(train, ds.subset(eval_idx), indices, eval_idx)
