"""Per-node learning state, shared by in-process trials and socket workers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .binarize import ThresholdVector, apply_thresholds, compute_thresholds
from .core import ClassBlockedWeights, Int8FeatureDataset
from .errors import ArgumentError
from .rng import SeededRng
from .stdp import EdgeModel, StdpConfig, count_correct, model_from_weights, new_model


@dataclass(frozen=True)
class NodeConfig:
    node_id: int
    seed: int
    stdp: StdpConfig
    class_roster: tuple
    method: str = "mean"

    def to_json(self) -> dict:
        d = asdict(self)
        d["class_roster"] = list(self.class_roster)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "NodeConfig":
        return cls(
            node_id=int(d["node_id"]),
            seed=int(d["seed"]),
            stdp=StdpConfig(**d["stdp"]),
            class_roster=tuple(int(c) for c in d["class_roster"]),
            method=d.get("method", "mean"),
        )


class NodeRuntime:
    """One edge node: local data, thresholds, and an STDP model.

    The node's random stream is ``SeededRng(seed).derive("node", node_id)``;
    model initialization and every training pass draw from it in call order.
    """

    def __init__(self, config: NodeConfig, train: Int8FeatureDataset, eval: Int8FeatureDataset):
        if train.dim != eval.dim:
            raise ArgumentError(f"train has {train.dim} features, eval has {eval.dim}")
        self.config = config
        self.node_id = config.node_id
        self.train_set = train
        self.eval_set = eval
        self.rng = SeededRng(config.seed).derive("node", config.node_id)
        self.model: EdgeModel | None = None
        self.set_thresholds(compute_thresholds(train, config.method, node_id=config.node_id))

    @property
    def dim(self) -> int:
        return self.train_set.dim

    def set_thresholds(self, tv: ThresholdVector) -> ThresholdVector:
        self.thresholds = tv
        self.train_bits = apply_thresholds(self.train_set, tv)
        self.eval_bits = apply_thresholds(self.eval_set, tv)
        return tv

    @property
    def trained(self) -> bool:
        return self.model is not None

    def train(self) -> dict:
        if self.model is None:
            self.model = new_model(self.config.stdp, self.config.class_roster, self.dim, self.rng)
        self.model.train(self.train_bits, self.rng)
        return {"samples": self.train_bits.n, "neuron_counts": self.model.neuron_counts()}

    def get_weights(self) -> ClassBlockedWeights:
        return self.model.extract_weights()

    def inject(self, w: ClassBlockedWeights) -> None:
        self.model.inject_weights(w)

    def evaluate(self, w: ClassBlockedWeights | None = None) -> tuple[int, int]:
        model = self.model if w is None else model_from_weights(self.config.stdp, self.config.class_roster, w)
        return count_correct(model, self.eval_bits), self.eval_bits.n
