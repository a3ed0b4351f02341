"""Seeded trials: data world, partition, node handles, federation, baselines.

A trial talks to its nodes only through *handles* (``configure``,
``set_thresholds``, ``train``, ``get_weights``, ``inject``, ``evaluate``).
:class:`LocalHandle` wraps an in-process :class:`NodeRuntime`; the socket
orchestrator supplies handles with the same surface, so the distributed and
in-process paths execute the same code and yield the same records.

When there are fewer handles than nodes (four virtual nodes on two
workers), nodes are run in sequential groups: each slot re-configures its
handle when it needs it and keeps a copy of its weights after training.
"""

from __future__ import annotations

import functools
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import BASELINES, BaselineConfig, evaluate_baseline, pooled_federated
from .binarize import apply_thresholds, compute_thresholds, shared_thresholds
from .core import ClassBlockedWeights, Int8FeatureDataset, concat_datasets, payload_bytes
from .errors import ConfigurationError
from .federation import STRATEGIES, MergeStrategy, run_rounds
from .features import (
    BASE_DIM, DEFAULT_NOISE_SIGMA, QUALITY_SEPARATION, PartitionPlan, SyntheticSpec,
    generate_synthetic, partition_noniid, project_wide, random_projection,
)
from .fstd import load_features
from .node import NodeConfig, NodeRuntime
from .rng import SeededRng
from .stdp import StdpConfig

DEFAULT_SEEDS = tuple(range(42, 52))
STRATEGY_NAMES = tuple(s.value for s in STRATEGIES)


# -- data world --------------------------------------------------------------

@dataclass(frozen=True)
class DataSpec:
    """Where the int8 features come from.

    The pool is fixed by ``data_seed``; the trial seed only decides which
    pool rows land in each node's train split and in the eval split.
    """

    quality: str = "high"
    separation: float | None = None     # overrides the quality lookup
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    pool_per_class: int = 1000
    data_seed: int = 2024
    dim: int = BASE_DIM
    feature_path: str | None = None

    def resolved_separation(self) -> float:
        if self.separation is not None:
            return float(self.separation)
        if self.quality not in QUALITY_SEPARATION:
            raise ConfigurationError(f"unknown quality {self.quality!r}; choose from {sorted(QUALITY_SEPARATION)}")
        return QUALITY_SEPARATION[self.quality]


@functools.lru_cache(maxsize=32)
def _base_pool(spec: DataSpec) -> Int8FeatureDataset:
    if spec.feature_path is not None:
        return load_features(spec.feature_path)
    synth = SyntheticSpec(
        n_classes=3, dim=BASE_DIM, samples_per_class=spec.pool_per_class,
        separation=spec.resolved_separation(), noise_sigma=spec.noise_sigma,
    )
    return generate_synthetic(synth, SeededRng(spec.data_seed).derive("data"))


@functools.lru_cache(maxsize=32)
def build_pool(spec: DataSpec) -> Int8FeatureDataset:
    base = _base_pool(replace(spec, dim=BASE_DIM))
    if spec.dim == base.dim:
        return base
    if spec.dim < base.dim:
        raise ConfigurationError(f"cannot narrow {base.dim}-dim features to {spec.dim}")
    proj = random_projection(spec.dim, SeededRng(spec.data_seed).derive("projection", spec.dim), base.dim)
    return project_wide(base, proj)


# -- trial description ---------------------------------------------------------

@dataclass(frozen=True)
class TrialSpec:
    seed: int
    stdp: StdpConfig = StdpConfig()
    data: DataSpec = DataSpec()
    n_nodes: int = 2
    per_class: int | None = None        # default: 100 // n_nodes
    eval_per_class: int = 100
    method: str = "mean"
    thresholds: str = "local"           # or "shared"
    rounds: int = 1
    regime: str = "fedunion"
    baselines: bool = True
    baseline_cfg: BaselineConfig = BaselineConfig()

    def validate(self):
        if self.n_nodes < 2:
            raise ConfigurationError("a federated trial needs at least two nodes")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if self.thresholds not in ("local", "shared"):
            raise ConfigurationError("thresholds must be 'local' or 'shared'")
        MergeStrategy.parse(self.regime)
        self.stdp.validate(self.data.dim)

    @property
    def node_per_class(self) -> int:
        return self.per_class if self.per_class is not None else 100 // self.n_nodes

    def plan(self) -> PartitionPlan:
        return PartitionPlan.paired(self.n_nodes, self.node_per_class, self.eval_per_class)

    def config_point(self) -> dict:
        """Everything but the seed, flattened for record keys."""
        return {
            "nw": self.stdp.num_weights,
            "npc": self.stdp.neurons_per_class,
            "lc": self.stdp.learning_competition,
            "epochs": self.stdp.epochs,
            "dim": self.data.dim,
            "quality": self.data.quality if self.data.separation is None else "custom",
            "separation": self.data.resolved_separation() if self.data.feature_path is None else None,
            "data_seed": self.data.data_seed,
            "n_nodes": self.n_nodes,
            "per_class": self.node_per_class,
            "method": self.method,
            "thresholds": self.thresholds,
            "rounds": self.rounds,
            "regime": MergeStrategy.parse(self.regime).value,
        }

    def key(self) -> str:
        return json.dumps({**self.config_point(), "seed": self.seed}, sort_keys=True)


# -- records ----------------------------------------------------------------

@dataclass
class TrialRecord:
    seed: int
    config: dict
    status: str = "ok"
    error: str | None = None
    individual: dict = field(default_factory=dict)          # node -> acc
    federated: dict = field(default_factory=dict)           # strategy -> node -> acc (round 1)
    baselines: dict = field(default_factory=dict)           # name -> {"individual", "federated"}
    neuron_counts: list = field(default_factory=list)       # per round: class -> rows
    rounds: list = field(default_factory=list)              # per round: strategy -> mean acc
    payload_bytes: int = 0
    timing: dict = field(default_factory=dict)

    # -- derived metrics -------------------------------------------------------

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def individual_mean(self) -> float:
        return float(np.mean(list(self.individual.values())))

    def strategy_mean(self, strategy) -> float:
        accs = self.federated[MergeStrategy.parse(strategy).value]
        return float(np.mean(list(accs.values())))

    @property
    def best(self) -> float:
        """Oracle upper bound: the best strategy mean of this trial."""
        return max(self.strategy_mean(s) for s in STRATEGY_NAMES)

    @property
    def best_strategies(self) -> list[str]:
        b = self.best
        return [s for s in STRATEGY_NAMES if self.strategy_mean(s) == b]

    def round_series(self, strategy="fedunion") -> list[float]:
        name = MergeStrategy.parse(strategy).value
        return [r[name] for r in self.rounds]

    # -- serialization ---------------------------------------------------------

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "seed": self.seed,
            "config": self.config,
            "status": self.status,
            "error": self.error,
            "individual": {str(k): v for k, v in self.individual.items()},
            "federated": {s: {str(k): v for k, v in accs.items()} for s, accs in self.federated.items()},
            "baselines": self.baselines,
            "neuron_counts": [{str(c): n for c, n in counts.items()} for counts in self.neuron_counts],
            "rounds": self.rounds,
            "payload_bytes": self.payload_bytes,
        }
        if timing:
            d["timing"] = self.timing
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            seed=int(d["seed"]),
            config=dict(d["config"]),
            status=d.get("status", "ok"),
            error=d.get("error"),
            individual={int(k): v for k, v in d.get("individual", {}).items()},
            federated={s: {int(k): v for k, v in accs.items()} for s, accs in d.get("federated", {}).items()},
            baselines=d.get("baselines", {}),
            neuron_counts=[{int(c): n for c, n in counts.items()} for counts in d.get("neuron_counts", [])],
            rounds=list(d.get("rounds", [])),
            payload_bytes=int(d.get("payload_bytes", 0)),
            timing=dict(d.get("timing", {})),
        )

    def key(self) -> str:
        return json.dumps({**self.config, "seed": self.seed}, sort_keys=True)


def failed_record(spec: TrialSpec, error: BaseException | str) -> TrialRecord:
    return TrialRecord(spec.seed, spec.config_point(), status="failed", error=str(error))


# -- handles ----------------------------------------------------------------

class LocalHandle:
    """In-process node; the same surface as the socket handle."""

    def __init__(self):
        self.runtime: NodeRuntime | None = None
        self.active = None

    def configure(self, cfg: NodeConfig, train: Int8FeatureDataset, eval: Int8FeatureDataset):
        self.runtime = NodeRuntime(cfg, train, eval)

    def set_thresholds(self, tv):
        return self.runtime.set_thresholds(tv)

    def train(self) -> dict:
        return self.runtime.train()

    def get_weights(self) -> ClassBlockedWeights:
        return self.runtime.get_weights()

    def inject(self, w: ClassBlockedWeights) -> None:
        self.runtime.inject(w)

    def evaluate(self, w: ClassBlockedWeights | None = None) -> tuple[int, int]:
        return self.runtime.evaluate(w)

    def close(self):
        pass


class NodeSlot:
    """One federated node realized on a (possibly shared) handle."""

    def __init__(self, handle, cfg: NodeConfig, train, eval, thresholds=None, exclusive: bool = True):
        self.handle = handle
        self.cfg = cfg
        self.node_id = cfg.node_id
        self.train_set = train
        self.eval_set = eval
        self.thresholds = thresholds
        self.exclusive = exclusive
        self._weights: ClassBlockedWeights | None = None
        self._live = False           # the handle holds this node's trained model

    def _activate(self):
        if getattr(self.handle, "active", None) is self:
            return
        self.handle.configure(self.cfg, self.train_set, self.eval_set)
        if self.thresholds is not None:
            self.handle.set_thresholds(self.thresholds)
        self.handle.active = self
        self._live = False

    def train(self) -> dict:
        if not self._live and self._weights is not None:
            raise ConfigurationError("virtual nodes sharing a worker support a single round only")
        self._activate()
        info = self.handle.train()
        self._live = True
        self._weights = self.handle.get_weights()
        return info

    def get_weights(self) -> ClassBlockedWeights:
        if self._live and getattr(self.handle, "active", None) is self:
            self._weights = self.handle.get_weights()
        return self._weights

    def inject(self, w: ClassBlockedWeights) -> None:
        if not self.exclusive:
            raise ConfigurationError("virtual nodes sharing a worker support a single round only")
        self.handle.inject(w)
        self._weights = w

    def evaluate(self, w: ClassBlockedWeights | None = None) -> tuple[int, int]:
        self._activate()
        if w is None:
            if self._live:
                return self.handle.evaluate(None)
            w = self._weights
        return self.handle.evaluate(w)


# -- trial ------------------------------------------------------------------

def _node_thresholds(spec: TrialSpec, trains: dict):
    if spec.thresholds == "shared":
        tv = shared_thresholds(concat_datasets(trains.values()), spec.method)
        return {n: tv for n in trains}
    return {n: compute_thresholds(t, spec.method, node_id=n) for n, t in trains.items()}


def _baseline_results(spec: TrialSpec, trains: dict, eval_set, node_tv: dict) -> dict:
    cfg = spec.baseline_cfg
    out = {}
    for name in BASELINES:
        indiv = []
        for n, train in trains.items():
            rng = SeededRng(spec.seed).derive("baseline", name, n)
            if name == "knn_int8":
                indiv.append(evaluate_baseline(name, train, eval_set, cfg, rng))
            else:
                tv = node_tv[n]
                indiv.append(evaluate_baseline(name, apply_thresholds(train, tv), apply_thresholds(eval_set, tv), cfg, rng))
        rng = SeededRng(spec.seed).derive("baseline", name, "pooled")
        if name == "knn_int8":
            fed = pooled_federated(name, list(trains.values()), eval_set, cfg, rng)
        else:
            pool = concat_datasets(trains.values())
            tv = compute_thresholds(pool, spec.method)
            fed = pooled_federated(name, [apply_thresholds(pool, tv)], apply_thresholds(eval_set, tv), cfg, rng)
        out[name] = {"individual": float(np.mean(indiv)), "federated": fed}
    return out


def run_trial(spec: TrialSpec, handles=None) -> TrialRecord:
    """One seeded trial over ``handles`` (default: one in-process node each)."""
    spec.validate()
    t0 = time.perf_counter()
    pool = build_pool(spec.data)
    plan = spec.plan()
    own = plan.ownership()
    part = partition_noniid(pool, plan, SeededRng(spec.seed).derive("partition"))
    roster = tuple(pool.class_roster)
    handles = list(handles) if handles is not None else [LocalHandle() for _ in plan.nodes]
    exclusive = len(handles) >= len(plan.nodes)
    if not exclusive and spec.rounds > 1:
        raise ConfigurationError("multi-round trials need one worker per node")
    node_tv = _node_thresholds(spec, part.train)
    slots = []
    for i, n in enumerate(plan.nodes):
        cfg = NodeConfig(n, spec.seed, spec.stdp, roster, spec.method)
        sent = node_tv[n] if spec.thresholds == "shared" else None
        slots.append(NodeSlot(handles[i % len(handles)], cfg, part.train[n], part.eval, sent, exclusive))

    t_train = time.perf_counter()
    for slot in slots:
        slot.train()
    train_s = time.perf_counter() - t_train
    payload = payload_bytes(slots[0].get_weights())
    history = run_rounds(slots, own, spec.regime, spec.rounds)

    first = history.rounds[0]
    rec = TrialRecord(spec.seed, spec.config_point())
    rec.individual = dict(first.individual)
    rec.federated = {s: dict(accs) for s, accs in first.federated.items()}
    rec.neuron_counts = [dict(m.neuron_counts) for m in history.rounds]
    rec.rounds = [
        {"individual": float(np.mean(list(m.individual.values()))),
         **{s: m.strategy_mean(s) for s in STRATEGY_NAMES}}
        for m in history.rounds
    ]
    rec.payload_bytes = payload
    if spec.baselines:
        rec.baselines = _baseline_results(spec, part.train, part.eval, node_tv)
    rec.timing = {"train_s": train_s, "total_s": time.perf_counter() - t0}
    return rec


def record_equal(a: TrialRecord, b: TrialRecord) -> bool:
    """Equality ignoring timing columns."""
    return a.to_dict(timing=False) == b.to_dict(timing=False)


def trial_specs(base: TrialSpec, grid, seeds) -> list[TrialSpec]:
    """Cartesian product ``grid x seeds``; ``grid`` yields StdpConfig points."""
    return [replace(base, seed=int(seed), stdp=cfg) for cfg in grid for seed in seeds]


def stdp_grid(nw=(20,), npc=(50,), lc=(0.1,), **extra) -> list[StdpConfig]:
    return [StdpConfig(num_weights=a, neurons_per_class=b, learning_competition=c, **extra)
            for a in nw for b in npc for c in lc]


__all__ = [
    "DataSpec", "TrialSpec", "TrialRecord", "LocalHandle", "NodeSlot", "build_pool", "run_trial",
    "record_equal", "trial_specs", "stdp_grid", "failed_record", "DEFAULT_SEEDS", "STRATEGY_NAMES",
]


def spec_to_dict(spec: TrialSpec) -> dict:
    return asdict(spec)
