"""Acceptance criteria C1..C11, each checked at its stated tolerance and time limit.

Every test appends a "C<n> PASS|FAIL ..." line that the terminal summary prints.
Run directly with ``python tests/test_acceptance.py`` or through pytest.
"""
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from fedstdp.baselines import init_mlp, knn_predict, linear_loss_and_grad, mlp_loss_and_grad
from fedstdp.binarize import thresholds_entropy
from fedstdp.core import ClassBlockedWeights, ClassOwnership, Int8FeatureDataset, payload_bytes
from fedstdp.experiment import TrialSpec, record_equal, run_trial
from fedstdp.federation import fed_avg, fed_best, fed_majority, fed_union
from fedstdp.fednet.orchestrator import orchestrate_trial
from fedstdp.fstd import encode_weights, weight_header_bytes
from fedstdp.rng import SeededRng
from fedstdp.stats import bootstrap_ci, wilcoxon_signed_rank
from fedstdp.stdp import StdpConfig, extract_weights, new_model, train

from conftest import ACCEPTANCE_LINES, random_bits, random_int8
from test_baselines import knn_oracle
from test_binarize import exhaustive_best

SEEDS = tuple(range(42, 52))


def _report(n, title, ok, detail, elapsed, limit):
    passed = bool(ok) and elapsed < limit
    line = f"C{n} {'PASS' if passed else 'FAIL'} {title}: {detail} [{elapsed:.1f}s, limit {limit}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


# -- C1 -------------------------------------------------------------------------

def test_c1_payload_accounting():
    t0 = time.perf_counter()
    sizes = {}
    for dim in (64, 256):
        model = new_model(StdpConfig(20, 25, 0.1), (0, 1, 2), dim, SeededRng(dim))
        w = extract_weights(model)
        wire = len(encode_weights(w)) - weight_header_bytes(3)
        sizes[dim] = (payload_bytes(w), wire)
    ok = sizes[64] == (4800, 4800) and sizes[256] == (19200, 19200)
    _report(1, "payload accounting", ok, f"D=64 {sizes[64]}, D=256 {sizes[256]}", time.perf_counter() - t0, 1)


# -- C2 -------------------------------------------------------------------------

def _tie_ranks(a):
    return np.array([(a < v).sum() + ((a == v).sum() + 1) / 2 for v in a])


def enumerated_p(d):
    """Two-sided exact p from all 2**n sign assignments, zeros dropped."""
    d = np.asarray(d, dtype=np.float64)
    d = d[d != 0]
    n = d.shape[0]
    ranks = _tie_ranks(np.abs(d))
    w_plus = ranks[d > 0].sum()
    stat = min(w_plus, ranks.sum() - w_plus)
    signs = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    sums = signs @ ranks
    return min(1.0, 2 * float((sums <= stat + 1e-9).mean()))


def test_c2_wilcoxon_exactness():
    t0 = time.perf_counter()
    p10 = wilcoxon_signed_rank(np.arange(1, 11) * 0.013).pvalue
    ok = abs(p10 - 2 / 1024) <= 1e-12
    rng = SeededRng(2)
    worst = 0.0
    for i in range(200):
        n = 1 + rng.below(12)
        if i % 2:
            d = (np.array([rng.below(7) for _ in range(n)]) - 3) * 0.01  # ties and zeros
        else:
            d = rng.normals(n)
        worst = max(worst, abs(wilcoxon_signed_rank(d).pvalue - enumerated_p(d)))
    ok = ok and worst <= 1e-12
    _report(2, "Wilcoxon exactness", ok, f"p(n=10)={p10:.12f}, max oracle gap {worst:.1e} over 200",
            time.perf_counter() - t0, 10)


# -- C3 -------------------------------------------------------------------------

def _fuzz_pair(rng):
    dim = 1 + rng.below(16)
    n_classes = 2 + rng.below(4)
    owners = {}
    for c in range(n_classes):
        owners[c] = ({0}, {1}, {0, 1})[rng.below(3)]
    owners[0], owners[n_classes - 1] = {0}, {1}
    rows = {c: 1 + rng.below(4) for c in owners}
    lo, hi = ((-128, 128), (0, 2))[rng.below(2)]

    def block(c):
        return (np.floor(rng.uniform(lo, hi, rows[c] * dim)).astype(np.int64)).reshape(rows[c], dim)
    parts = [(node, ClassBlockedWeights({c: block(c) for c, o in owners.items() if node in o}, dim))
             for node in (0, 1)]
    return parts, ClassOwnership(owners)


def _check_merges(parts, own):
    held = {node: w.as_dict() for node, w in parts}
    union, avg, maj = fed_union(parts, own).as_dict(), fed_avg(parts, own).as_dict(), fed_majority(parts, own).as_dict()
    for c in own.classes():
        blocks = [held[node][c].astype(np.int64) for node in (0, 1) if node in own.owners(c)]
        if not np.array_equal(union[c], np.vstack(blocks)):
            return "union"
        lo, hi = np.min(blocks, axis=0), np.max(blocks, axis=0)
        if not (maj[c] >= hi).all():
            return "majority"
        a = avg[c].astype(np.int64)
        if not ((a >= lo) & (a <= hi)).all():
            return "avg bounds"
        twice = np.sum(blocks, axis=0)
        if len(blocks) == 2:
            tie = twice % 2 != 0
            if not ((a[tie] % 2 == 0).all() and (np.abs(2 * a[tie] - twice[tie]) == 1).all()):
                return "avg ties"
            if not (2 * a[~tie] == twice[~tie]).all():
                return "avg mean"
    for me in (0, 1):
        best = fed_best(parts, own, me).as_dict()
        for c in own.owned_by(me):
            if not np.array_equal(best[c], held[me][c]):
                return "best"
    return None


def test_c3_merge_algebra():
    t0 = time.perf_counter()
    rng = SeededRng(3)
    failures = [f for f in (_check_merges(*_fuzz_pair(rng)) for _ in range(1000)) if f]
    _report(3, "merge algebra", not failures, f"1000 fuzzed pairs, {len(failures)} violations {sorted(set(failures))}",
            time.perf_counter() - t0, 5)


# -- C4 -------------------------------------------------------------------------

def test_c4_strategy_ordering():
    t0 = time.perf_counter()
    recs = [run_trial(TrialSpec(seed=s, baselines=False)) for s in SEEDS]
    union = np.array([r.strategy_mean("fedunion") for r in recs])
    avg = np.array([r.strategy_mean("fedavg") for r in recs])
    indiv = np.array([r.individual_mean for r in recs])
    p = wilcoxon_signed_rank(union, avg, alternative="greater").pvalue
    wins = int((union >= indiv).sum())
    ok = p < 0.05 and wins >= 8
    _report(4, "strategy ordering", ok,
            f"FedUnion {union.mean():.3f} vs FedAvg {avg.mean():.3f} (one-sided p={p:.4f}), "
            f"FedUnion >= individual in {wins}/10", time.perf_counter() - t0, 120)


# -- C5 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def multi_round():
    t0 = time.perf_counter()
    recs = {regime: [run_trial(TrialSpec(seed=s, rounds=5, regime=regime, baselines=False)) for s in SEEDS]
            for regime in ("fedunion", "fedavg")}
    return recs, time.perf_counter() - t0


def test_c5_multi_round_regimes(multi_round):
    recs, elapsed = multi_round
    series = {k: np.array([r.round_series("fedunion") for r in v]) for k, v in recs.items()}
    u1, u5 = series["fedunion"][:, 0].mean(), series["fedunion"][:, 4].mean()
    a1, a5 = series["fedavg"][:, 0].mean(), series["fedavg"][:, 4].mean()
    stable = all(all(c == r.neuron_counts[1] for c in r.neuron_counts[1:]) for r in recs["fedunion"])
    ok = abs(u5 - u1) <= 0.02 and a1 - a5 > 0.02 and stable
    _report(5, "multi-round regimes", ok,
            f"FedUnion regime R1 {u1:.3f} -> R5 {u5:.3f}, FedAvg regime R1 {a1:.3f} -> R5 {a5:.3f}, "
            f"counts constant after R1: {stable}", elapsed, 300)


def test_fedavg_regime_degrades_in_most_seeds(multi_round):
    recs, _ = multi_round
    drops = sum(r.round_series("fedunion")[4] < r.round_series("fedunion")[0] for r in recs["fedavg"])
    assert drops >= 8


# -- C6 -------------------------------------------------------------------------

def test_c6_entropy_threshold_optimality():
    t0 = time.perf_counter()
    rng = SeededRng(6)
    n, d = 60, 50
    feats = (np.floor(rng.uniform(-128, 128, n * d)).astype(np.int64)).reshape(n, d)
    feats[:, :10] = feats[:, :10] // 32  # coarse columns force value ties
    labels = np.array([rng.below(3) for _ in range(n)])
    labels[:3] = (0, 1, 2)
    theta = thresholds_entropy(Int8FeatureDataset(feats, labels, (0, 1, 2))).values
    mismatches = sum(theta[j] != exhaustive_best(feats[:, j].tolist(), labels.tolist())[0] for j in range(d))
    _report(6, "entropy-threshold optimality", mismatches == 0, f"{d - mismatches}/{d} features match the exhaustive argmax",
            time.perf_counter() - t0, 10)


# -- C7 -------------------------------------------------------------------------

def test_c7_sparsity_conservation():
    t0 = time.perf_counter()
    rng = SeededRng(7)
    bad, configs = 0, []
    for i in range(6):
        dim = (16, 64, 128)[i % 3]
        nw = 1 + rng.below(dim - 1)
        budget = None if i % 2 else 1 + rng.below(nw)
        cfg = StdpConfig(nw, 1 + rng.below(20), float(rng.uniform(0, 1, 1)[0]), swap_budget=budget, epochs=1)
        data = random_bits(rng, 1000, dim, p=float(rng.uniform(0.05, 0.95, 1)[0]))
        model = train(new_model(cfg, (0, 1, 2), dim, rng), data, rng)
        sums = extract_weights(model).matrix().astype(np.int64).sum(axis=1)
        bad += int((sums != nw).sum())
        configs.append(f"D{dim}/nw{nw}")
    _report(7, "sparsity conservation", bad == 0, f"{bad} rows off nw after 1000 samples ({', '.join(configs)})",
            time.perf_counter() - t0, 10)


# -- C8 -------------------------------------------------------------------------

def _fd_rel_error(loss_fn, params, x, y, eps=1e-6):
    _, grads = loss_fn(params, x, y)
    worst = 0.0
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
        worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12))
    return worst


def test_c8_oracle_equivalences():
    t0 = time.perf_counter()
    rng = SeededRng(8)
    ints = random_int8(rng, 100, 8)
    q_int = random_int8(rng, 200, 8).features
    knn_eu = np.array_equal(knn_predict(ints, q_int, 5, "euclidean"),
                            knn_oracle(ints.features.astype(int), ints.labels, (0, 1, 2), q_int.astype(int), 5,
                                       lambda a, b: int(((a - b) ** 2).sum())))
    bits = random_bits(rng, 100, 12, p=0.4)
    q_bits = random_bits(rng, 200, 12).bits
    knn_ham = np.array_equal(knn_predict(bits, q_bits, 3, "hamming"),
                             knn_oracle(bits.bits, bits.labels, (0, 1, 2), q_bits, 3, lambda a, b: int((a != b).sum())))

    x = rng.normals(20 * 6).reshape(20, 6)
    y = np.array([rng.below(3) for _ in range(20)])
    lin = _fd_rel_error(linear_loss_and_grad, {"W": rng.normals(18).reshape(3, 6), "b": rng.normals(3)}, x, y)
    params = init_mlp(6, 3, 7, rng)
    params["b1"] = rng.normals(7) * 0.1
    mlp = _fd_rel_error(mlp_loss_and_grad, params, x, y)

    hits = 0
    for i in range(500):
        sample = rng.normals(40) + 0.5
        lo, hi = bootstrap_ci(sample, B=2000, rng=SeededRng(i).derive("coverage"))
        hits += lo <= 0.5 <= hi
    coverage = hits / 500
    ok = knn_eu and knn_ham and lin < 1e-4 and mlp < 1e-4 and abs(coverage - 0.95) <= 0.03
    _report(8, "oracle equivalences", ok,
            f"kNN euclidean {knn_eu}, hamming {knn_ham}; grad rel err linear {lin:.1e}, MLP {mlp:.1e}; "
            f"bootstrap coverage {coverage:.3f}", time.perf_counter() - t0, 60)


# -- C9 -------------------------------------------------------------------------

def test_c9_wire_equivalence(workers):
    t0 = time.perf_counter()
    spec = TrialSpec(seed=42)
    remote = orchestrate_trial(workers, spec)
    local = run_trial(spec)
    ok = remote.ok and record_equal(remote, local)
    _report(9, "wire/in-process equivalence", ok, f"loopback record {'equals' if ok else 'differs from'} in-process "
            f"({remote.error or 'ok'})", time.perf_counter() - t0, 60)


# -- C10 ------------------------------------------------------------------------

C10_CONFIGS = ((30, 25, 0.1), (35, 25, 0.1), (40, 25, 0.1))


def test_c10_four_nodes_vs_two():
    t0 = time.perf_counter()
    by_n = {}
    for n_nodes in (2, 4):
        by_n[n_nodes] = [run_trial(TrialSpec(seed=s, stdp=StdpConfig(*cfg), n_nodes=n_nodes, baselines=False))
                         for cfg in C10_CONFIGS for s in SEEDS]
    avg = {n: np.array([r.strategy_mean("fedavg") for r in v]) for n, v in by_n.items()}
    union = {n: np.array([r.strategy_mean("fedunion") for r in v]) for n, v in by_n.items()}
    p_union = wilcoxon_signed_rank(union[4], union[2]).pvalue
    per_cfg = ", ".join(f"nw{c[0]} {avg[2][10 * i:10 * i + 10].mean():.3f}/{avg[4][10 * i:10 * i + 10].mean():.3f}"
                        for i, c in enumerate(C10_CONFIGS))
    ok = avg[4].mean() <= avg[2].mean() and p_union > 0.05
    _report(10, "N=4 vs N=2", ok,
            f"FedAvg N2 {avg[2].mean():.3f} vs N4 {avg[4].mean():.3f} (N2/N4 {per_cfg}); "
            f"FedUnion N2 {union[2].mean():.3f} vs N4 {union[4].mean():.3f} p={p_union:.3f}",
            time.perf_counter() - t0, 180)


# -- C11 ------------------------------------------------------------------------

WIDTH_GRID = {64: (10, 15, 20, 25, 30, 35, 40), 128: (15, 20, 30, 40, 50, 60), 256: (20, 30, 40, 60, 80, 100)}


def test_c11_width_scaling():
    t0 = time.perf_counter()
    best, arg = {}, {}
    for dim, grid in WIDTH_GRID.items():
        data = replace(TrialSpec(seed=0).data, dim=dim)
        means = {nw: np.mean([run_trial(TrialSpec(seed=s, stdp=StdpConfig(nw, 25, 0.1), data=data,
                                                  baselines=False)).best for s in SEEDS])
                 for nw in grid}
        arg[dim] = max(grid, key=lambda nw: (means[nw], -nw))
        best[dim] = means[arg[dim]]
    dims = sorted(WIDTH_GRID)
    ok = (all(best[a] <= best[b] for a, b in zip(dims, dims[1:]))
          and all(arg[a] < arg[b] for a, b in zip(dims, dims[1:])))
    _report(11, "width scaling", ok, ", ".join(f"D={d}: best {best[d]:.3f} at nw={arg[d]}" for d in dims),
            time.perf_counter() - t0, 600)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
