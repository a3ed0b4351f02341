"""Experiment configuration: a TOML file checked against a JSON Schema.

Layout (every table and key is optional; defaults shown)::

    [data]
    quality = "high"            # "low" | "medium" | "high"
    # separation = 31.12        # overrides quality
    noise_sigma = 32.0
    pool_per_class = 1000
    data_seed = 2024
    dim = 64                    # 64, or wider via random projection
    # feature_path = "features.fstd"   # ingest real features instead

    [partition]
    n_nodes = 2
    # per_class = 50            # default 100 // n_nodes
    eval_per_class = 100

    [binarize]
    method = "mean"             # "mean" | "median" | "entropy"
    thresholds = "local"        # "local" | "shared"

    [stdp]
    nw = [20, 30, 40]
    npc = [25, 50]
    lc = [0.1, 1.0]
    epochs = 5

    [federation]
    strategies = ["fedavg", "fedunion", "fedbest", "fedmajority"]
    rounds = 1
    regime = "fedunion"

    [baselines]
    enabled = true
    k = 5
    epochs = 50
    batch_size = 32
    lr = 0.1
    hidden = 32

    [run]
    seeds = [42, 43, 44, 45, 46]
    nodes = "in-process"        # or ["host:port", ...]
    output = "runs/default"
    workers = 1
    timeout = 30.0

Validation errors are :class:`~fedstdp.errors.ConfigurationError`.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import BaselineConfig
from .errors import ConfigurationError
from .experiment import DataSpec, TrialSpec, stdp_grid, trial_specs
from .federation import MergeStrategy
from .features import QUALITY_SEPARATION

DESK_GRID = {"nw": [20, 30, 40], "npc": [25, 50], "lc": [0.1, 1.0]}
PAPER_GRID = {"nw": [10, 15, 20, 25, 30, 35, 40], "npc": [25, 50, 75], "lc": [0.1, 1.0]}
DESK_SEEDS = [42, 43, 44, 45, 46]
PAPER_SEEDS = list(range(42, 52))

_POS_INT = {"type": "integer", "minimum": 1}
_INT_LIST = {"type": "array", "items": _POS_INT, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fedstdp experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "quality": {"enum": sorted(QUALITY_SEPARATION)},
                "separation": {"type": "number", "minimum": 0},
                "noise_sigma": {"type": "number", "exclusiveMinimum": 0},
                "pool_per_class": _POS_INT,
                "data_seed": {"type": "integer", "minimum": 0},
                "dim": _POS_INT,
                "feature_path": {"type": "string", "minLength": 1},
            },
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_nodes": {"type": "integer", "minimum": 2},
                "per_class": _POS_INT,
                "eval_per_class": _POS_INT,
            },
        },
        "binarize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["mean", "median", "entropy"]},
                "thresholds": {"enum": ["local", "shared"]},
            },
        },
        "stdp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nw": _INT_LIST,
                "npc": _INT_LIST,
                "lc": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "epochs": _POS_INT,
                "swap_budget": _POS_INT,
            },
        },
        "federation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategies": {
                    "type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": [s.value for s in MergeStrategy]},
                },
                "rounds": _POS_INT,
                "regime": {"enum": ["fedavg", "fedunion"]},
            },
        },
        "baselines": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "k": _POS_INT,
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": _POS_INT,
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "hidden": _POS_INT,
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "nodes": {
                    "oneOf": [
                        {"const": "in-process"},
                        {"type": "array", "items": {"type": "string", "pattern": r"^[^:\s]+:\d+$"}, "minItems": 1},
                    ]
                },
                "output": {"type": "string", "minLength": 1},
                "workers": _POS_INT,
                "timeout": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


def validate_document(doc: dict) -> None:
    """Raise ConfigurationError naming the first schema violation."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"config {where}: {e.message}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = DataSpec()
    n_nodes: int = 2
    per_class: int | None = None
    eval_per_class: int = 100
    method: str = "mean"
    thresholds: str = "local"
    nw: tuple = tuple(DESK_GRID["nw"])
    npc: tuple = tuple(DESK_GRID["npc"])
    lc: tuple = tuple(DESK_GRID["lc"])
    epochs: int = 5
    swap_budget: int | None = None
    strategies: tuple = tuple(s.value for s in MergeStrategy)
    rounds: int = 1
    regime: str = "fedunion"
    baselines: bool = True
    baseline_cfg: BaselineConfig = BaselineConfig()
    seeds: tuple = tuple(DESK_SEEDS)
    nodes: object = "in-process"
    output: str = "runs/default"
    workers: int = 1
    timeout: float = 30.0
    source: str | None = field(default=None, compare=False)

    def validate(self) -> "ExperimentConfig":
        if not (self.nw and self.npc and self.lc):
            raise ConfigurationError("the stdp grid is empty")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if not self.strategies:
            raise ConfigurationError("at least one strategy is required")
        for s in self.strategies:
            MergeStrategy.parse(s)
        for spec in self.specs()[: len(self.grid())]:
            spec.validate()
        return self

    @property
    def in_process(self) -> bool:
        return self.nodes == "in-process"

    def grid(self):
        return stdp_grid(self.nw, self.npc, self.lc, epochs=self.epochs, swap_budget=self.swap_budget)

    def base_spec(self) -> TrialSpec:
        return TrialSpec(
            seed=int(self.seeds[0]) if self.seeds else 0,
            data=self.data,
            n_nodes=self.n_nodes,
            per_class=self.per_class,
            eval_per_class=self.eval_per_class,
            method=self.method,
            thresholds=self.thresholds,
            rounds=self.rounds,
            regime=self.regime,
            baselines=self.baselines,
            baseline_cfg=self.baseline_cfg,
        )

    def specs(self) -> list[TrialSpec]:
        """Grid x seeds, grid-major, in a fixed order."""
        return trial_specs(self.base_spec(), self.grid(), self.seeds)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        for k in ("nw", "npc", "lc", "seeds", "strategies"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if "lc" in kw:
            kw["lc"] = tuple(float(x) for x in kw["lc"])
        return replace(self, **kw).validate()

    # -- loading ----------------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, source: str | None = None) -> "ExperimentConfig":
        validate_document(doc)
        data = doc.get("data", {})
        part = doc.get("partition", {})
        binz = doc.get("binarize", {})
        stdp = doc.get("stdp", {})
        fed = doc.get("federation", {})
        base = doc.get("baselines", {})
        run = doc.get("run", {})
        nodes = run.get("nodes", "in-process")
        cfg = cls(
            data=DataSpec(**data),
            n_nodes=part.get("n_nodes", 2),
            per_class=part.get("per_class"),
            eval_per_class=part.get("eval_per_class", 100),
            method=binz.get("method", "mean"),
            thresholds=binz.get("thresholds", "local"),
            nw=tuple(stdp.get("nw", DESK_GRID["nw"])),
            npc=tuple(stdp.get("npc", DESK_GRID["npc"])),
            lc=tuple(float(x) for x in stdp.get("lc", DESK_GRID["lc"])),
            epochs=stdp.get("epochs", 5),
            swap_budget=stdp.get("swap_budget"),
            strategies=tuple(fed.get("strategies", [s.value for s in MergeStrategy])),
            rounds=fed.get("rounds", 1),
            regime=fed.get("regime", "fedunion"),
            baselines=base.get("enabled", True),
            baseline_cfg=BaselineConfig(**{k: v for k, v in base.items() if k != "enabled"}),
            seeds=tuple(run.get("seeds", DESK_SEEDS)),
            nodes=nodes if nodes == "in-process" else tuple(nodes),
            output=run.get("output", "runs/default"),
            workers=run.get("workers", 1),
            timeout=float(run.get("timeout", 30.0)),
            source=source,
        )
        return cfg.validate()

    @classmethod
    def from_toml(cls, text: str, source: str | None = None) -> "ExperimentConfig":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config is not valid TOML: {exc}") from None
        return cls.from_dict(doc, source)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_toml(path.read_text(), source=str(path))


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """The full 7 x 3 x 2 grid over seeds 42..51."""
    return cfg.with_overrides(nw=PAPER_GRID["nw"], npc=PAPER_GRID["npc"], lc=PAPER_GRID["lc"], seeds=PAPER_SEEDS)
