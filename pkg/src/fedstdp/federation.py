"""Merging class-blocked STDP weights and driving multi-round federation.

``parts`` is always a sequence of ``(node_id, ClassBlockedWeights)`` in node
roster order; that order decides concatenation and fallback.  Ownership says
which nodes trained each class, so blocks a node holds for classes it never
saw (its untrained initial neurons) take no part in a merge.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .core import ClassBlockedWeights, ClassOwnership, block_lookup
from .errors import ConfigurationError, MergeError, OwnershipError


class MergeStrategy(str, enum.Enum):
    FEDAVG = "fedavg"
    FEDUNION = "fedunion"
    FEDBEST = "fedbest"
    FEDMAJORITY = "fedmajority"

    @classmethod
    def parse(cls, value) -> "MergeStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown strategy {value!r}; choose from {[s.value for s in cls]}"
            ) from None


STRATEGIES = tuple(MergeStrategy)
REGIMES = (MergeStrategy.FEDAVG, MergeStrategy.FEDUNION)


def _check_dims(parts) -> int:
    dims = {w.dim for _, w in parts}
    if len(dims) != 1:
        raise MergeError(f"cannot merge weights of different widths {sorted(dims)}")
    return dims.pop()


def _merge_classes(parts, own: ClassOwnership) -> list[int]:
    present = set(own.classes())
    for node, w in parts:
        for c in w.class_ids:
            if c not in present:
                raise OwnershipError(f"node {node} holds class {c}, which no node owns")
    return sorted(present)


def _owner_blocks(parts, own: ClassOwnership, c: int, strict: bool) -> list[tuple[object, np.ndarray]]:
    known = {node for node, _ in parts}
    missing = own.owners(c) - known
    if missing and strict:
        raise OwnershipError(f"class {c} is owned by {sorted(missing, key=str)}, who sent no weights")
    out = []
    for node, w in parts:
        if node in own.owners(c):
            rows = block_lookup(w, c)
            if rows is None:
                if strict:
                    raise OwnershipError(f"node {node} owns class {c} but sent no block for it")
                continue
            out.append((node, rows))
    return out


def _elementwise(parts, own, reduce, name) -> ClassBlockedWeights:
    dim = _check_dims(parts)
    blocks = {}
    for c in _merge_classes(parts, own):
        owned = _owner_blocks(parts, own, c, strict=True)
        if len(owned) == 1:
            blocks[c] = owned[0][1]
            continue
        counts = {rows.shape[0] for _, rows in owned}
        if len(counts) != 1:
            raise MergeError(f"{name}: class {c} has unequal row counts {sorted(counts)} across owners")
        blocks[c] = reduce(np.stack([rows.astype(np.int64) for _, rows in owned]))
    return ClassBlockedWeights(blocks, dim)


def _avg_reduce(stack: np.ndarray) -> np.ndarray:
    # np.rint rounds half to even
    return np.rint(stack.mean(axis=0)).astype(np.int8)


def _max_reduce(stack: np.ndarray) -> np.ndarray:
    return stack.max(axis=0).astype(np.int8)


def fed_avg(parts, own: ClassOwnership) -> ClassBlockedWeights:
    """Shared classes: elementwise mean rounded half-to-even; exclusive: owner copy."""
    return _elementwise(list(parts), own, _avg_reduce, "fedavg")


def fed_majority(parts, own: ClassOwnership) -> ClassBlockedWeights:
    """Shared classes: elementwise max; exclusive: owner copy."""
    return _elementwise(list(parts), own, _max_reduce, "fedmajority")


def fed_union(parts, own: ClassOwnership) -> ClassBlockedWeights:
    """Concatenate every owner's neurons per class, in roster order."""
    parts = list(parts)
    dim = _check_dims(parts)
    blocks = {}
    for c in _merge_classes(parts, own):
        owned = _owner_blocks(parts, own, c, strict=False)
        if owned:
            blocks[c] = np.vstack([rows for _, rows in owned])
    return ClassBlockedWeights(blocks, dim)


def fed_best(parts, own: ClassOwnership, me) -> ClassBlockedWeights:
    """Own block for classes ``me`` trained, first owner's block otherwise."""
    parts = list(parts)
    dim = _check_dims(parts)
    mine = dict(parts).get(me)
    blocks = {}
    for c in _merge_classes(parts, own):
        if me in own.owners(c) and mine is not None and block_lookup(mine, c) is not None:
            blocks[c] = block_lookup(mine, c)
            continue
        owned = _owner_blocks(parts, own, c, strict=False)
        if not owned:
            raise OwnershipError(f"class {c} has no owner among the merged nodes")
        blocks[c] = owned[0][1]
    return ClassBlockedWeights(blocks, dim)


def merge_n(parts, strategy, own: ClassOwnership, me=None) -> ClassBlockedWeights:
    """Any strategy over ``k >= 2`` nodes; ``me`` is required for FedBest."""
    parts = list(parts)
    if len(parts) < 2:
        raise MergeError(f"merge needs at least two nodes, got {len(parts)}")
    strategy = MergeStrategy.parse(strategy)
    if strategy is MergeStrategy.FEDAVG:
        return fed_avg(parts, own)
    if strategy is MergeStrategy.FEDUNION:
        return fed_union(parts, own)
    if strategy is MergeStrategy.FEDMAJORITY:
        return fed_majority(parts, own)
    if me is None:
        raise ConfigurationError("fedbest merges are per node; pass me=")
    return fed_best(parts, own, me)


# -- row provenance ----------------------------------------------------------
#
# After a merge is injected every node holds the same model.  For later rounds
# each node is authoritative only for the rows it contributed: the next merge
# takes node o's retrained copy of the rows that came from o.  That keeps the
# FedUnion neuron count fixed after round 1 instead of doubling every round.

RowOrigins = dict  # class id -> list[frozenset of node ids], one entry per row


def authoritative_part(w: ClassBlockedWeights, origins: RowOrigins | None, node) -> ClassBlockedWeights:
    if origins is None:
        return w
    blocks = {}
    for c, rows in w.blocks:
        tags = origins.get(c)
        if tags is None or len(tags) != rows.shape[0]:
            blocks[c] = rows
            continue
        keep = np.array([node in t for t in tags])
        if keep.any():
            blocks[c] = rows[keep]
    return ClassBlockedWeights(blocks, w.dim)


def merged_origins(parts, own: ClassOwnership, strategy) -> RowOrigins:
    strategy = MergeStrategy.parse(strategy)
    origins = {}
    for c in own.classes():
        owned = [(node, block_lookup(w, c)) for node, w in parts if node in own.owners(c)]
        owned = [(node, rows) for node, rows in owned if rows is not None]
        if not owned:
            continue
        if strategy is MergeStrategy.FEDUNION:
            origins[c] = [frozenset([node]) for node, rows in owned for _ in range(rows.shape[0])]
        elif len(owned) == 1:
            origins[c] = [frozenset([owned[0][0]])] * owned[0][1].shape[0]
        else:
            origins[c] = [frozenset(n for n, _ in owned)] * owned[0][1].shape[0]
    return origins


# -- round driver ------------------------------------------------------------

class FederatedNode(Protocol):
    node_id: object

    def train(self) -> dict: ...
    def get_weights(self) -> ClassBlockedWeights: ...
    def inject(self, w: ClassBlockedWeights) -> None: ...
    def evaluate(self, w: ClassBlockedWeights | None = None) -> tuple[int, int]: ...


@dataclass
class RoundMetrics:
    round: int
    individual: dict          # node -> accuracy of its own (pre-merge) model
    federated: dict           # strategy value -> node -> accuracy
    neuron_counts: dict       # class -> rows held by every node (after injection)

    def strategy_mean(self, strategy) -> float:
        accs = self.federated[MergeStrategy.parse(strategy).value]
        return float(np.mean(list(accs.values())))


@dataclass
class RoundHistory:
    regime: str
    rounds: list = field(default_factory=list)

    def append(self, metrics: RoundMetrics):
        expected = len(self.rounds) + 1
        if metrics.round != expected:
            raise ValueError(f"round {metrics.round} appended where {expected} was expected")
        self.rounds.append(metrics)

    def series(self, strategy) -> list[float]:
        return [m.strategy_mean(strategy) for m in self.rounds]


def _accuracy(result: tuple[int, int]) -> float:
    correct, total = result
    return correct / total


def collect_parts(nodes: Sequence[FederatedNode], origins: RowOrigins | None = None):
    return [(n.node_id, authoritative_part(n.get_weights(), origins, n.node_id)) for n in nodes]


def evaluate_strategies(nodes: Sequence[FederatedNode], parts, own: ClassOwnership,
                        strategies=STRATEGIES) -> dict:
    shared_merges = {}
    out = {}
    for s in map(MergeStrategy.parse, strategies):
        if s is not MergeStrategy.FEDBEST:
            shared_merges[s] = merge_n(parts, s, own)
        out[s.value] = {}
        for node in nodes:
            merged = shared_merges[s] if s in shared_merges else merge_n(parts, s, own, me=node.node_id)
            out[s.value][node.node_id] = _accuracy(node.evaluate(merged))
    return out


def _individual(nodes) -> dict:
    return {n.node_id: _accuracy(n.evaluate(None)) for n in nodes}


def first_round(nodes: Sequence[FederatedNode], own: ClassOwnership) -> RoundMetrics:
    """Round 1: every node has trained locally once; evaluate all merges."""
    parts = collect_parts(nodes)
    counts = {c: rows.shape[0] for c, rows in parts[0][1].blocks}
    return RoundMetrics(1, _individual(nodes), evaluate_strategies(nodes, parts, own), counts)


def run_round(nodes: Sequence[FederatedNode], own: ClassOwnership, regime, origins: RowOrigins | None,
              round_index: int) -> tuple[RoundMetrics, RowOrigins]:
    """Merge with the regime's strategy, inject everywhere, retrain, evaluate."""
    regime = MergeStrategy.parse(regime)
    if regime not in REGIMES:
        raise ConfigurationError(f"retraining regime must be one of {[r.value for r in REGIMES]}")
    parts = collect_parts(nodes, origins)
    merged = merge_n(parts, regime, own)
    new_origins = merged_origins(parts, own, regime)
    for node in nodes:
        node.inject(merged)
    for node in nodes:
        node.train()
    parts = collect_parts(nodes, new_origins)
    metrics = RoundMetrics(
        round_index,
        _individual(nodes),
        evaluate_strategies(nodes, parts, own),
        merged.row_counts(),
    )
    return metrics, new_origins


def run_rounds(nodes: Sequence[FederatedNode], own: ClassOwnership, regime, rounds: int) -> RoundHistory:
    if rounds < 1:
        raise ConfigurationError("rounds must be >= 1")
    regime = MergeStrategy.parse(regime)
    history = RoundHistory(regime.value)
    history.append(first_round(nodes, own))
    origins = None
    for r in range(2, rounds + 1):
        metrics, origins = run_round(nodes, own, regime, origins, r)
        history.append(metrics)
    return history
