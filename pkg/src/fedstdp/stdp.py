"""Software emulation of a sparse binary STDP edge learner.

Each class owns ``npc`` prototype neurons.  A fresh neuron has exactly
``nw`` weights equal to 1 (``w_max``) and the rest 0.  Training is
supervised winner-take-all Hebbian swapping:

1. Samples are visited in a seeded order.
2. Among the neurons of the sample's class, the winner is the one with the
   largest overlap ``sum(b * w)`` (lowest index on ties).
3. A *swap* moves one unit of weight from a position where the input is 0
   to a position where the input is 1 and the weight is below ``w_max``,
   always taking the lowest-index candidates first.  The winner performs
   ``s = min(available swaps, swap_budget)`` swaps, where ``swap_budget``
   defaults to ``ceil(nw / 4)``.
4. Every other neuron of that class performs ``floor(lc * s)`` swaps towards
   the same sample, so large ``lc`` drags the whole class towards every
   input and homogenizes its prototypes.
5. One call to ``train`` makes ``epochs`` passes, each in a fresh seeded
   order.  With about one sample per neuron a single pass leaves most
   prototypes close to their random start.

Swaps conserve the row sum, therefore freshly initialized neurons keep
exactly ``nw`` ones forever.  Rows injected from a merge may break that
sparsity; they are never repaired.

Inference scores class ``c`` by the best integer overlap among its rows and
predicts the highest-scoring class, lowest class id on ties.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import BinaryDataset, ClassBlockedWeights
from .errors import ArgumentError, ConfigurationError, ShapeError
from .rng import SeededRng

_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class StdpConfig:
    num_weights: int = 20
    neurons_per_class: int = 50
    learning_competition: float = 0.1
    input_bits: int = 1
    w_max: int = 1
    swap_budget: int | None = None
    allow_saturation: bool = False
    epochs: int = 5

    @property
    def budget(self) -> int:
        if self.swap_budget is not None:
            return int(self.swap_budget)
        return math.ceil(self.num_weights / 4)

    def validate(self, dim: int):
        if self.input_bits != 1:
            raise ConfigurationError("the edge learner only accepts 1-bit inputs")
        if self.neurons_per_class < 1:
            raise ConfigurationError("neurons_per_class must be >= 1")
        if not 0.0 <= self.learning_competition <= 1.0:
            raise ConfigurationError("learning_competition must lie in [0, 1]")
        if self.num_weights < 1:
            raise ConfigurationError("num_weights must be >= 1")
        if self.num_weights > dim:
            raise ConfigurationError(f"num_weights={self.num_weights} exceeds feature dim {dim}")
        if self.num_weights == dim:
            if not self.allow_saturation:
                raise ConfigurationError(
                    f"num_weights == dim ({dim}) saturates every weight; set allow_saturation to force it"
                )
            warnings.warn("num_weights == dim: all neurons saturate and cannot differentiate", RuntimeWarning)
        if self.budget < 1:
            raise ConfigurationError("swap_budget must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")

    def key(self) -> tuple:
        return (self.num_weights, self.neurons_per_class, self.learning_competition)


class EdgeModel:
    """Prototype neurons for every class in ``class_roster``."""

    def __init__(self, config: StdpConfig, class_roster, dim: int, blocks: dict):
        self.config = config
        self.class_roster = tuple(int(c) for c in class_roster)
        self.dim = int(dim)
        self.blocks = {int(c): np.array(rows, dtype=np.int8) for c, rows in sorted(blocks.items())}
        self.trained_counts = {c: 0 for c in self.class_roster}

    def neuron_counts(self) -> dict[int, int]:
        return {c: rows.shape[0] for c, rows in self.blocks.items()}

    def copy(self) -> "EdgeModel":
        clone = EdgeModel(self.config, self.class_roster, self.dim, self.blocks)
        clone.trained_counts = dict(self.trained_counts)
        return clone

    # -- learning ----------------------------------------------------------

    def _update(self, rows: np.ndarray, b: np.ndarray):
        overlap = rows.astype(np.int32) @ b
        winner = int(np.argmax(overlap))
        on = b.astype(bool)
        src = (~on)[None, :] & (rows > 0)
        tgt = on[None, :] & (rows < self.config.w_max)
        avail = np.minimum(src.sum(axis=1), tgt.sum(axis=1))
        s = min(int(avail[winner]), self.config.budget)
        if s == 0:
            return
        k_loser = int(math.floor(self.config.learning_competition * s + _FLOOR_EPS))
        if k_loser == 0:
            row = rows[winner]
            src_pos = np.flatnonzero(src[winner])[:s]
            tgt_pos = np.flatnonzero(tgt[winner])[:s]
            row[src_pos] -= 1
            row[tgt_pos] += 1
            return
        k = np.full(rows.shape[0], k_loser, dtype=np.int64)
        k[winner] = s
        k = np.minimum(k, avail)[:, None]
        take_src = src & (np.cumsum(src, axis=1) <= k)
        take_tgt = tgt & (np.cumsum(tgt, axis=1) <= k)
        rows[take_src] -= 1
        rows[take_tgt] += 1

    def train(self, ds: BinaryDataset, rng: SeededRng) -> "EdgeModel":
        if ds.dim != self.dim:
            raise ArgumentError(f"model expects {self.dim} features, dataset has {ds.dim}")
        missing = set(np.unique(ds.labels).tolist()) - set(self.blocks)
        if missing:
            raise ArgumentError(f"labels {sorted(missing)} have no neurons in this model")
        bits = ds.bits.astype(np.int32)
        for _ in range(self.config.epochs):
            for i in rng.permutation(ds.n):
                y = int(ds.labels[i])
                self._update(self.blocks[y], bits[i])
                self.trained_counts[y] = self.trained_counts.get(y, 0) + 1
        return self

    # -- inference ---------------------------------------------------------

    def scores(self, bits: np.ndarray) -> np.ndarray:
        """``n x len(class_roster)`` best-overlap scores (``iinfo.min`` if a class has no rows)."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int32))
        if bits.shape[1] != self.dim:
            raise ShapeError(f"model expects {self.dim} features, got {bits.shape[1]}")
        out = np.full((bits.shape[0], len(self.class_roster)), np.iinfo(np.int32).min, dtype=np.int64)
        for j, c in enumerate(self.class_roster):
            rows = self.blocks.get(c)
            if rows is not None:
                out[:, j] = (bits @ rows.astype(np.int32).T).max(axis=1)
        return out

    def predict(self, bits: np.ndarray) -> np.ndarray:
        roster = np.array(self.class_roster)
        return roster[np.argmax(self.scores(bits), axis=1)]

    def infer(self, b) -> tuple[int, dict[int, int]]:
        s = self.scores(b)[0]
        j = int(np.argmax(s))
        present = {c: int(s[i]) for i, c in enumerate(self.class_roster) if c in self.blocks}
        return self.class_roster[j], present

    def evaluate(self, ds: BinaryDataset) -> float:
        return count_correct(self, ds) / ds.n

    # -- federation hooks --------------------------------------------------

    def extract_weights(self) -> ClassBlockedWeights:
        return ClassBlockedWeights(self.blocks, self.dim)

    def inject_weights(self, w: ClassBlockedWeights) -> "EdgeModel":
        if w.dim != self.dim:
            raise ShapeError(f"weights have {w.dim} columns, model expects {self.dim}")
        unknown = set(w.class_ids) - set(self.class_roster)
        if unknown:
            raise ArgumentError(f"injected classes {sorted(unknown)} not in model roster")
        self.blocks = {c: np.array(rows, dtype=np.int8) for c, rows in w.blocks}
        return self


def count_correct(model: EdgeModel, ds: BinaryDataset) -> int:
    if ds.n < 1:
        raise ArgumentError("evaluation needs at least one row")
    return int(np.count_nonzero(model.predict(ds.bits) == ds.labels))


def new_model(cfg: StdpConfig, classes, dim: int, rng: SeededRng) -> EdgeModel:
    cfg.validate(dim)
    blocks = {}
    for c in sorted(int(c) for c in classes):
        rows = np.zeros((cfg.neurons_per_class, dim), dtype=np.int8)
        for i in range(cfg.neurons_per_class):
            rows[i, rng.sample(dim, cfg.num_weights)] = cfg.w_max
        blocks[c] = rows
    return EdgeModel(cfg, classes, dim, blocks)


def train(model: EdgeModel, ds: BinaryDataset, rng: SeededRng) -> EdgeModel:
    return model.train(ds, rng)


def infer(model: EdgeModel, b) -> tuple[int, dict[int, int]]:
    return model.infer(b)


def evaluate(model: EdgeModel, ds: BinaryDataset) -> float:
    return model.evaluate(ds)


def extract_weights(model: EdgeModel) -> ClassBlockedWeights:
    return model.extract_weights()


def inject_weights(model: EdgeModel, w: ClassBlockedWeights) -> EdgeModel:
    return model.inject_weights(w)


def model_from_weights(cfg: StdpConfig, class_roster, w: ClassBlockedWeights) -> EdgeModel:
    """A model whose blocks are exactly ``w`` (no initialization draws)."""
    return EdgeModel(cfg, class_roster, w.dim, w.as_dict())
