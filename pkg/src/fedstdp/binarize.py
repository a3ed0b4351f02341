"""Per-feature binarization thresholds: mean, median, and MI-maximizing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryDataset, Int8FeatureDataset
from .errors import ArgumentError, ShapeError

METHODS = ("mean", "median", "entropy")

# candidates whose MI is within this of the best count as tied
MI_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ThresholdVector:
    values: np.ndarray
    method: str
    node_id: int | None = None  # None means shared (calibration-set) thresholds

    def __post_init__(self):
        if self.method not in METHODS:
            raise ArgumentError(f"unknown binarization method {self.method!r}")
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1 or not np.isfinite(values).all():
            raise ArgumentError("thresholds must be a finite 1-D vector")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def provenance(self) -> str:
        return "shared" if self.node_id is None else "local"

    def __eq__(self, other):
        if not isinstance(other, ThresholdVector):
            return NotImplemented
        return (
            self.method == other.method
            and self.node_id == other.node_id
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _require_rows(train: Int8FeatureDataset):
    if train is None or train.n < 1:
        raise ArgumentError("threshold computation needs at least one training row")


def thresholds_mean(train: Int8FeatureDataset, node_id=None) -> ThresholdVector:
    _require_rows(train)
    return ThresholdVector(train.features.astype(np.float64).mean(axis=0), "mean", node_id)


def thresholds_median(train: Int8FeatureDataset, node_id=None) -> ThresholdVector:
    _require_rows(train)
    return ThresholdVector(np.median(train.features.astype(np.float64), axis=0), "median", node_id)


def mutual_information(bits: np.ndarray, labels: np.ndarray) -> float:
    """Plug-in MI (nats) between a binary vector and discrete labels."""
    bits = np.asarray(bits).astype(bool)
    labels = np.asarray(labels)
    n = labels.shape[0]
    mi = 0.0
    for b in (False, True):
        side = bits == b
        nb = side.sum()
        if nb == 0:
            continue
        for c in np.unique(labels):
            nbc = np.count_nonzero(side & (labels == c))
            if nbc:
                nc = np.count_nonzero(labels == c)
                mi += nbc / n * np.log(nbc * n / (nb * nc))
    return float(mi)


def _split_mi(left: np.ndarray, total: np.ndarray, n: int) -> np.ndarray:
    """MI of every candidate split given cumulative class counts ``left`` (m x C)."""
    right = total[None, :] - left
    n_left = left.sum(axis=1, keepdims=True).astype(np.float64)
    n_right = n - n_left
    mi = np.zeros(left.shape[0])
    for counts, side_n in ((left, n_left), (right, n_right)):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = counts / n * np.log(counts * n / (side_n * total[None, :]))
        mi += np.where(counts > 0, term, 0.0).sum(axis=1)
    return mi


def best_entropy_threshold(column: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """``(theta, mi)`` maximizing MI over midpoints of consecutive distinct values.

    Ties (within ``MI_TIE_TOL``) go to the smallest threshold.  A constant
    column has no candidate; its single value is returned so every bit is 0.
    """
    column = np.asarray(column, dtype=np.float64)
    order = np.argsort(column, kind="stable")
    values = column[order]
    classes, codes = np.unique(np.asarray(labels)[order], return_inverse=True)
    n = values.shape[0]
    onehot = np.zeros((n, classes.shape[0]), dtype=np.int64)
    onehot[np.arange(n), codes] = 1
    cum = np.cumsum(onehot, axis=0)
    cut = np.flatnonzero(values[:-1] != values[1:])
    if cut.size == 0:
        return float(values[0]), 0.0
    mi = _split_mi(cum[cut], cum[-1], n)
    best = int(np.flatnonzero(mi >= mi.max() - MI_TIE_TOL)[0])
    i = cut[best]
    return float((values[i] + values[i + 1]) / 2.0), float(mi[best])


def thresholds_entropy(train: Int8FeatureDataset, labels=None, node_id=None) -> ThresholdVector:
    _require_rows(train)
    labels = train.labels if labels is None else np.asarray(labels)
    if labels.shape[0] != train.n:
        raise ShapeError(f"{train.n} rows but {labels.shape[0]} labels")
    if np.unique(labels).shape[0] < 2:
        raise ArgumentError("entropy thresholds need at least two distinct labels")
    theta = [best_entropy_threshold(train.features[:, j], labels)[0] for j in range(train.dim)]
    return ThresholdVector(np.array(theta), "entropy", node_id)


_DISPATCH = {"mean": thresholds_mean, "median": thresholds_median, "entropy": thresholds_entropy}


def compute_thresholds(train: Int8FeatureDataset, method: str, node_id=None) -> ThresholdVector:
    if method not in _DISPATCH:
        raise ArgumentError(f"unknown binarization method {method!r}")
    return _DISPATCH[method](train, node_id=node_id)


def shared_thresholds(calibration: Int8FeatureDataset, method: str) -> ThresholdVector:
    return compute_thresholds(calibration, method, node_id=None)


def apply_thresholds(ds: Int8FeatureDataset, theta: ThresholdVector) -> BinaryDataset:
    if ds.dim != theta.dim:
        raise ShapeError(f"dataset has {ds.dim} features, thresholds have {theta.dim}")
    bits = (ds.features > theta.values[None, :]).astype(np.uint8)
    return BinaryDataset(bits, ds.labels, ds.class_roster)
