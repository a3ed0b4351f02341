import numpy as np
import pytest

from fedstdp.baselines import (
    BaselineConfig, cosine_lr, evaluate_baseline, hamming_matrix, init_mlp, knn_classify, knn_predict,
    linear_loss_and_grad, mlp_loss_and_grad, pooled_federated, squared_euclidean_matrix, train_linear, train_mlp,
)
from fedstdp.core import BinaryDataset, concat_datasets
from fedstdp.errors import ArgumentError, ConfigurationError
from fedstdp.experiment import DataSpec, build_pool
from fedstdp.features import PartitionPlan, partition_noniid
from fedstdp.rng import SeededRng

from conftest import random_bits, random_int8


def knn_oracle(x, labels, roster, q, k, dist):
    """Full scan: sort by (distance, index), vote, lowest class on ties."""
    out = []
    for row in q:
        d = sorted((dist(row, x[i]), i) for i in range(len(x)))[:k]
        votes = {c: 0 for c in roster}
        for _, i in d:
            votes[int(labels[i])] += 1
        top = max(votes.values())
        out.append(min(c for c, v in votes.items() if v == top))
    return np.array(out)


def test_knn_matches_full_scan_both_metrics():
    rng = SeededRng(21)
    ints = random_int8(rng, 60, 8)
    q_int = random_int8(rng, 40, 8).features
    ref = knn_oracle(ints.features.astype(int), ints.labels, (0, 1, 2), q_int.astype(int), 5,
                     lambda a, b: int(((a - b) ** 2).sum()))
    np.testing.assert_array_equal(knn_predict(ints, q_int, 5, "euclidean"), ref)

    bits = random_bits(rng, 60, 12, p=0.4)
    q_bits = random_bits(rng, 40, 12).bits
    ref = knn_oracle(bits.bits, bits.labels, (0, 1, 2), q_bits, 3, lambda a, b: int((a != b).sum()))
    np.testing.assert_array_equal(knn_predict(bits, q_bits, 3, "hamming"), ref)


def test_exact_match_with_k1():
    ds = random_int8(SeededRng(2), 30, 6)
    for i in (0, 7, 29):
        assert knn_classify(ds, ds.features[i], k=1) == ds.labels[i]


def test_k_equal_n_uses_global_vote():
    ds = random_bits(SeededRng(3), 9, 5)
    # 3 of each class: vote tie goes to class 0
    assert (knn_predict(ds, ds.bits, k=9, metric="hamming") == 0).all()


def test_knn_errors():
    ds = random_bits(SeededRng(3), 6, 5)
    with pytest.raises(ArgumentError):
        knn_predict(ds, ds.bits, k=7, metric="hamming")
    with pytest.raises(ArgumentError):
        knn_predict(ds, ds.bits, k=1, metric="euclidean")
    with pytest.raises(ArgumentError):
        knn_predict(ds, ds.bits, k=1, metric="cosine")


def test_distance_matrices_match_loops():
    rng = SeededRng(5)
    a = random_bits(rng, 7, 19).bits
    b = random_bits(rng, 5, 19).bits
    h = hamming_matrix(a, b)
    for i in range(7):
        for j in range(5):
            assert h[i, j] == sum(int(x) ^ int(y) for x, y in zip(a[i], b[j]))
    ia, ib = random_int8(rng, 4, 6).features, random_int8(rng, 3, 6).features
    e = squared_euclidean_matrix(ia, ib)
    assert e[2, 1] == sum((int(x) - int(y)) ** 2 for x, y in zip(ia[2], ib[1]))


def test_cosine_schedule_endpoints():
    assert cosine_lr(0.1, 0, 100) == pytest.approx(0.1)
    assert cosine_lr(0.1, 50, 100) == pytest.approx(0.05)
    assert cosine_lr(0.1, 100, 100) == pytest.approx(0.0, abs=1e-15)


def _fd_check(loss_fn, params, x, y, eps=1e-6):
    _, grads = loss_fn(params, x, y)
    for name, g in grads.items():
        num = np.zeros_like(params[name])
        for idx in np.ndindex(params[name].shape):
            orig = params[name][idx]
            params[name][idx] = orig + eps
            up, _ = loss_fn(params, x, y)
            params[name][idx] = orig - eps
            down, _ = loss_fn(params, x, y)
            params[name][idx] = orig
            num[idx] = (up - down) / (2 * eps)
        rel = np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12)
        assert rel < 1e-4, (name, rel)


def test_linear_gradients_match_finite_differences():
    rng = SeededRng(8)
    x = rng.normals(20 * 6).reshape(20, 6)
    y = np.array([rng.below(3) for _ in range(20)])
    params = {"W": rng.normals(18).reshape(3, 6), "b": rng.normals(3)}
    _fd_check(linear_loss_and_grad, params, x, y)


def test_mlp_gradients_match_finite_differences():
    rng = SeededRng(9)
    x = rng.normals(15 * 5).reshape(15, 5)
    y = np.array([rng.below(3) for _ in range(15)])
    params = init_mlp(5, 3, 7, rng)
    params["b1"] = rng.normals(7) * 0.1
    _fd_check(mlp_loss_and_grad, params, x, y)


def test_linear_fits_separable_data():
    bits = np.array([[1, 1, 0, 0]] * 6 + [[0, 0, 1, 1]] * 6)
    ds = BinaryDataset(bits, np.array([0] * 6 + [1] * 6), (0, 1))
    assert train_linear(ds, BaselineConfig(batch_size=4), SeededRng(0)).accuracy(ds) == 1.0


def test_mlp_solves_xor_where_linear_cannot():
    bits = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 4)
    ds = BinaryDataset(bits, np.array([0, 1, 1, 0] * 4), (0, 1))
    cfg = BaselineConfig(epochs=300, batch_size=4, lr=0.5, hidden=32)
    assert train_mlp(ds, cfg, SeededRng(1)).accuracy(ds) == 1.0
    assert train_linear(ds, cfg, SeededRng(1)).accuracy(ds) <= 0.75


def test_zero_epochs_predicts_first_class():
    ds = random_bits(SeededRng(4), 30, 8)
    model = train_linear(ds, BaselineConfig(epochs=0))
    assert (model.predict(ds.bits) == 0).all()
    assert model.accuracy(ds) == pytest.approx(1 / 3)


def test_config_errors():
    ds = random_bits(SeededRng(4), 30, 8)
    with pytest.raises(ConfigurationError):
        train_mlp(ds, BaselineConfig(hidden=0))
    with pytest.raises(ConfigurationError):
        init_mlp(8, 3, 0, SeededRng(0))
    with pytest.raises(ArgumentError):
        train_linear(random_bits(SeededRng(0), 5, 8, classes=1))
    with pytest.raises(ArgumentError):
        evaluate_baseline("svm", ds, ds)
    with pytest.raises(ArgumentError):
        pooled_federated("knn_binary", [], ds)


def test_pooling_duplicates_keeps_accuracy():
    ds = random_int8(SeededRng(6), 45, 8)
    ev = random_int8(SeededRng(7), 30, 8)
    single = evaluate_baseline("knn_int8", ds, ev, BaselineConfig(k=1))
    assert pooled_federated("knn_int8", [ds, ds], ev, BaselineConfig(k=1)) == single


def _node_sets(seed):
    pool = build_pool(DataSpec())
    return partition_noniid(pool, PartitionPlan.paired(), SeededRng(seed).derive("partition"))


def test_pooling_recovers_unseen_class():
    part = _node_sets(42)
    ev = part.eval
    pred = knn_predict(part.train[0], ev.features, 5)
    assert not (pred == 2).any()
    pooled = knn_predict(concat_datasets([part.train[0], part.train[1]]), ev.features, 5)
    assert np.mean(pooled[ev.labels == 2] == 2) > 0.5


def test_pooled_knn_beats_every_node_in_most_seeds():
    wins = 0
    for seed in range(42, 52):
        part = _node_sets(seed)
        indiv = max(evaluate_baseline("knn_int8", part.train[n], part.eval) for n in part.train)
        wins += pooled_federated("knn_int8", list(part.train.values()), part.eval) >= indiv
    assert wins >= 9
