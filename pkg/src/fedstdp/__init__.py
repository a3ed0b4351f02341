"""Federated learning for sparse binary STDP prototype learners.

The package simulates edge nodes that binarize int8 features, learn
class-blocked prototype neurons with a winner-take-all Hebbian rule, and
exchange weights through one of four merge strategies, either in process or
over a small TCP protocol.
"""

from .core import BinaryDataset, ClassBlockedWeights, ClassOwnership, Int8FeatureDataset, payload_bytes
from .experiment import DataSpec, TrialRecord, TrialSpec, run_trial
from .federation import MergeStrategy, fed_avg, fed_best, fed_majority, fed_union, merge_n
from .rng import SeededRng
from .stdp import EdgeModel, StdpConfig

__version__ = "0.1.0"

__all__ = [
    "BinaryDataset", "ClassBlockedWeights", "ClassOwnership", "Int8FeatureDataset", "payload_bytes",
    "DataSpec", "TrialRecord", "TrialSpec", "run_trial",
    "MergeStrategy", "fed_avg", "fed_best", "fed_majority", "fed_union", "merge_n",
    "SeededRng", "EdgeModel", "StdpConfig",
]
