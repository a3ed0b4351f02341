"""Software reference classifiers: k-NN, softmax-linear, and a one-hidden-layer MLP.

The gradient-trained models use softmax cross-entropy, mini-batch SGD and a
per-step cosine schedule ``lr_t = lr0 * (1 + cos(pi t / T)) / 2`` where ``T``
is the total number of steps.  Class columns follow the training set's
class roster, so a class without samples still owns an output unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryDataset, Int8FeatureDataset, concat_datasets
from .errors import ArgumentError, ConfigurationError, ShapeError
from .rng import SeededRng

METRICS = ("hamming", "euclidean")
BASELINES = ("knn_int8", "knn_binary", "linear", "mlp")


@dataclass(frozen=True)
class BaselineConfig:
    k: int = 5
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.1
    hidden: int = 32

    def validate(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("lr must be > 0")
        if self.hidden < 1:
            raise ConfigurationError("the MLP needs at least one hidden unit")


# -- k-NN -------------------------------------------------------------------

def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise popcount(a xor b) for 0/1 rows, via packed bytes."""
    pa = np.packbits(np.asarray(a, dtype=np.uint8), axis=1)
    pb = np.packbits(np.asarray(b, dtype=np.uint8), axis=1)
    x = np.bitwise_xor(pa[:, None, :], pb[None, :, :])
    return np.bitwise_count(x).sum(axis=2, dtype=np.int64)


def squared_euclidean_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2 * a @ b.T


def _domain(train, metric: str) -> np.ndarray:
    if metric not in METRICS:
        raise ArgumentError(f"unknown metric {metric!r}")
    if metric == "hamming":
        if not isinstance(train, BinaryDataset):
            raise ArgumentError("hamming distance needs a binary dataset")
        return train.bits
    if not isinstance(train, Int8FeatureDataset):
        raise ArgumentError("euclidean distance needs an int8 dataset")
    return train.features


def knn_predict(train, queries: np.ndarray, k: int = 5, metric: str = "euclidean") -> np.ndarray:
    """Majority label of the ``k`` nearest rows for every query.

    Equal distances keep the lower training index first (stable sort); vote
    ties go to the lowest class id.
    """
    x = _domain(train, metric)
    if train.n < 1:
        raise ArgumentError("k-NN needs a non-empty training set")
    if not 1 <= k <= train.n:
        raise ArgumentError(f"k={k} must lie in [1, {train.n}]")
    q = np.atleast_2d(np.asarray(queries))
    if q.shape[1] != x.shape[1]:
        raise ShapeError(f"queries have {q.shape[1]} features, training set has {x.shape[1]}")
    dist = hamming_matrix(q, x) if metric == "hamming" else squared_euclidean_matrix(q, x)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    roster = np.array(sorted(train.class_roster))
    votes = (train.labels[nearest][:, :, None] == roster[None, None, :]).sum(axis=1)
    return roster[np.argmax(votes, axis=1)]


def knn_classify(train, query, k: int = 5, metric: str = "euclidean") -> int:
    return int(knn_predict(train, np.asarray(query)[None, :], k, metric)[0])


# -- gradient-trained models --------------------------------------------------

def cosine_lr(lr0: float, t: int, total: int) -> float:
    if total <= 0:
        return lr0
    return lr0 * (1.0 + np.cos(np.pi * t / total)) / 2.0


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _ce_from_logits(z: np.ndarray, y: np.ndarray):
    p = _softmax(z)
    n = y.shape[0]
    loss = -np.log(p[np.arange(n), y] + 1e-300).mean()
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    return loss, dz / n


def linear_loss_and_grad(params: dict, x: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy of ``x @ W.T + b`` and its gradients."""
    z = x @ params["W"].T + params["b"]
    loss, dz = _ce_from_logits(z, y)
    return loss, {"W": dz.T @ x, "b": dz.sum(axis=0)}


def mlp_loss_and_grad(params: dict, x: np.ndarray, y: np.ndarray):
    h_pre = x @ params["W1"].T + params["b1"]
    h = np.maximum(h_pre, 0.0)
    z = h @ params["W2"].T + params["b2"]
    loss, dz = _ce_from_logits(z, y)
    dh = (dz @ params["W2"]) * (h_pre > 0)
    return loss, {
        "W1": dh.T @ x,
        "b1": dh.sum(axis=0),
        "W2": dz.T @ h,
        "b2": dz.sum(axis=0),
    }


@dataclass
class SoftmaxModel:
    kind: str                 # "linear" or "mlp"
    params: dict
    class_roster: tuple

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        p = self.params
        if self.kind == "linear":
            return x @ p["W"].T + p["b"]
        return np.maximum(x @ p["W1"].T + p["b1"], 0.0) @ p["W2"].T + p["b2"]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array(self.class_roster)[np.argmax(self.logits(np.atleast_2d(x)), axis=1)]

    def accuracy(self, ds: BinaryDataset) -> float:
        return float(np.mean(self.predict(ds.bits) == ds.labels))


def _targets(train: BinaryDataset):
    if np.unique(train.labels).shape[0] < 2:
        raise ArgumentError("gradient baselines need at least two classes in the training set")
    roster = tuple(sorted(train.class_roster))
    index = {c: i for i, c in enumerate(roster)}
    return roster, np.array([index[int(c)] for c in train.labels])


def _sgd(params: dict, grad_fn, x, y, cfg: BaselineConfig, rng: SeededRng) -> dict:
    n = x.shape[0]
    steps_per_epoch = -(-n // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = grad_fn(params, x[idx], y[idx])
            lr = cosine_lr(cfg.lr, t, total)
            for name, g in grads.items():
                params[name] -= lr * g
            t += 1
    return params


def train_linear(train: BinaryDataset, cfg: BaselineConfig = BaselineConfig(), rng: SeededRng | None = None) -> SoftmaxModel:
    cfg.validate()
    rng = rng or SeededRng(0)
    roster, y = _targets(train)
    x = train.bits.astype(np.float64)
    params = {"W": np.zeros((len(roster), train.dim)), "b": np.zeros(len(roster))}
    return SoftmaxModel("linear", _sgd(params, linear_loss_and_grad, x, y, cfg, rng), roster)


def _uniform_init(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, rows * cols).reshape(rows, cols)


def init_mlp(dim: int, n_classes: int, hidden: int, rng: SeededRng) -> dict:
    if hidden < 1:
        raise ConfigurationError("the MLP needs at least one hidden unit")
    return {
        "W1": _uniform_init(rng, hidden, dim),
        "b1": np.zeros(hidden),
        "W2": _uniform_init(rng, n_classes, hidden),
        "b2": np.zeros(n_classes),
    }


def train_mlp(train: BinaryDataset, cfg: BaselineConfig = BaselineConfig(), rng: SeededRng | None = None) -> SoftmaxModel:
    cfg.validate()
    rng = rng or SeededRng(0)
    roster, y = _targets(train)
    x = train.bits.astype(np.float64)
    params = init_mlp(train.dim, len(roster), cfg.hidden, rng)
    return SoftmaxModel("mlp", _sgd(params, mlp_loss_and_grad, x, y, cfg, rng), roster)


# -- evaluation ---------------------------------------------------------------

def evaluate_baseline(name: str, train, eval, cfg: BaselineConfig = BaselineConfig(),
                      rng: SeededRng | None = None) -> float:
    """Accuracy of one baseline; ``knn_int8`` takes int8 sets, the rest binary."""
    if name == "knn_int8":
        pred = knn_predict(train, eval.features, cfg.k, "euclidean")
    elif name == "knn_binary":
        pred = knn_predict(train, eval.bits, cfg.k, "hamming")
    elif name == "linear":
        pred = train_linear(train, cfg, rng).predict(eval.bits)
    elif name == "mlp":
        pred = train_mlp(train, cfg, rng).predict(eval.bits)
    else:
        raise ArgumentError(f"unknown baseline {name!r}; choose from {BASELINES}")
    return float(np.mean(pred == eval.labels))


def pooled_federated(name: str, node_sets, eval, cfg: BaselineConfig = BaselineConfig(),
                     rng: SeededRng | None = None) -> float:
    """Train once on the concatenation of every node's data."""
    node_sets = [s for s in node_sets if s is not None]
    if not node_sets or sum(s.n for s in node_sets) == 0:
        raise ArgumentError("pooled baseline needs at least one training row")
    dims = {s.dim for s in node_sets} | {eval.dim}
    if len(dims) != 1:
        raise ShapeError(f"pooled sets disagree on dimension: {sorted(dims)}")
    return evaluate_baseline(name, concat_datasets(node_sets), eval, cfg, rng)
