from dataclasses import replace

import numpy as np
import pytest

from fedstdp.core import ClassBlockedWeights, ClassOwnership, block_lookup
from fedstdp.errors import ConfigurationError, MergeError, OwnershipError
from fedstdp.experiment import TrialSpec, record_equal, run_trial
from fedstdp.federation import (
    MergeStrategy, fed_avg, fed_best, fed_majority, fed_union, merge_n,
)
from fedstdp.rng import SeededRng
from fedstdp.stdp import StdpConfig

from conftest import two_node_weights

SHARED = ClassOwnership({0: {0, 1}})


def _w(rows, c=0):
    rows = np.atleast_2d(rows)
    return ClassBlockedWeights({c: rows}, rows.shape[1])


def test_avg_exact_means():
    out = fed_avg([(0, _w([2, 4, 6, 8])), (1, _w([4, 4, 2, 0]))], SHARED)
    np.testing.assert_array_equal(block_lookup(out, 0), [[3, 4, 4, 4]])


def test_avg_ties_round_to_even():
    out = fed_avg([(0, _w([1, 0, 1, 3])), (1, _w([0, 0, 1, 0]))], SHARED)
    # 0.5 -> 0 and 1.5 -> 2
    np.testing.assert_array_equal(block_lookup(out, 0), [[0, 0, 1, 2]])


def test_avg_four_owners_matches_oracle():
    rng = SeededRng(4)
    own = ClassOwnership({0: {0, 1, 2, 3}})
    blocks = [rng.uniform(-5, 5, 12).astype(int).reshape(3, 4) for _ in range(4)]
    out = fed_avg([(i, _w(b)) for i, b in enumerate(blocks)], own)
    ref = np.zeros((3, 4), int)
    for i in range(3):
        for j in range(4):
            ref[i, j] = round(sum(b[i, j] for b in blocks) / 4)  # Python round is half-to-even
    np.testing.assert_array_equal(block_lookup(out, 0), ref)


def test_avg_exclusive_block_is_copied():
    parts, own = two_node_weights(SeededRng(1))
    out = fed_avg(parts, own)
    np.testing.assert_array_equal(block_lookup(out, 0), block_lookup(parts[0][1], 0))
    np.testing.assert_array_equal(block_lookup(out, 2), block_lookup(parts[1][1], 2))


def test_avg_rejects_unequal_rows():
    with pytest.raises(MergeError):
        fed_avg([(0, _w(np.ones((2, 3)))), (1, _w(np.ones((3, 3))))], SHARED)


def test_unknown_class_is_an_ownership_error():
    with pytest.raises(OwnershipError):
        fed_avg([(0, _w([1, 0], c=5)), (1, _w([1, 0]))], SHARED)


def test_dim_mismatch_is_a_merge_error():
    with pytest.raises(MergeError):
        fed_union([(0, _w([1, 0])), (1, _w([1, 0, 1]))], SHARED)


def test_union_concatenates_in_roster_order():
    a, b = np.ones((25, 4), np.int8), np.zeros((25, 4), np.int8)
    out = fed_union([(0, _w(a)), (1, _w(b))], SHARED)
    rows = block_lookup(out, 0)
    assert rows.shape == (50, 4)
    np.testing.assert_array_equal(rows[:25], a)
    np.testing.assert_array_equal(rows[25:], b)


def test_union_with_empty_part_is_identity():
    parts, _ = two_node_weights(SeededRng(2))
    first = parts[0][1]
    own = ClassOwnership({c: {0} for c in first.class_ids})
    assert fed_union([(0, first), (1, ClassBlockedWeights({}, first.dim))], own) == first


def test_union_of_four_nodes():
    own = ClassOwnership({0: {0, 1, 2, 3}})
    out = fed_union([(i, _w(np.full((25, 4), i))) for i in range(4)], own)
    assert out.row_counts() == {0: 100}


def test_best_owned_and_remote_blocks():
    parts, own = two_node_weights(SeededRng(3))
    mine, theirs = parts[0][1], parts[1][1]
    out = fed_best(parts, own, me=0)
    for c in (0, 1):
        np.testing.assert_array_equal(block_lookup(out, c), block_lookup(mine, c))
    np.testing.assert_array_equal(block_lookup(out, 2), block_lookup(theirs, 2))


def test_best_when_owning_everything_or_nothing():
    parts, _ = two_node_weights(SeededRng(5))
    mine, theirs = parts[0][1], parts[1][1]
    w_all = ClassBlockedWeights({0: block_lookup(mine, 0), 1: block_lookup(mine, 1),
                                 2: block_lookup(theirs, 1)}, mine.dim)
    assert fed_best([(0, w_all), (1, theirs)], ClassOwnership({0: {0}, 1: {0, 1}, 2: {0, 1}}), me=0) == w_all
    nothing = ClassOwnership({1: {1}, 2: {1}})
    assert fed_best([(0, ClassBlockedWeights({}, mine.dim)), (1, theirs)], nothing, me=0) == theirs
    with pytest.raises(OwnershipError):
        fed_best([(0, mine), (1, theirs)], ClassOwnership({0: {0}, 1: {0, 1}, 2: {7}}), me=0)


def test_majority():
    out = fed_majority([(0, _w([1, 0, 3])), (1, _w([2, 0, 1]))], SHARED)
    np.testing.assert_array_equal(block_lookup(out, 0), [[2, 0, 3]])


def test_majority_on_bits_is_or_and_idempotent():
    rng = SeededRng(6)
    a = (rng.uniform(0, 1, 40) < 0.3).astype(np.int8).reshape(4, 10)
    b = (rng.uniform(0, 1, 40) < 0.3).astype(np.int8).reshape(4, 10)
    out = block_lookup(fed_majority([(0, _w(a)), (1, _w(b))], SHARED), 0)
    np.testing.assert_array_equal(out, a | b)
    assert (out.sum(axis=1) >= a.sum(axis=1)).all()
    assert fed_majority([(0, _w(a)), (1, _w(a))], SHARED) == _w(a)


def test_merge_n_reduces_to_pairwise():
    parts, own = two_node_weights(SeededRng(7))
    assert merge_n(parts, "fedavg", own) == fed_avg(parts, own)
    assert merge_n(parts, "fedunion", own) == fed_union(parts, own)
    assert merge_n(parts, "fedmajority", own) == fed_majority(parts, own)
    assert merge_n(parts, MergeStrategy.FEDBEST, own, me=1) == fed_best(parts, own, 1)
    with pytest.raises(ConfigurationError):
        merge_n(parts, "fedbest", own)
    with pytest.raises(MergeError):
        merge_n(parts[:1], "fedavg", own)
    with pytest.raises(ConfigurationError):
        MergeStrategy.parse("fedprox")


def test_merges_are_pure():
    parts, own = two_node_weights(SeededRng(8))
    snapshot = [(n, w.as_dict()) for n, w in parts]
    for s in ("fedavg", "fedunion", "fedmajority"):
        assert merge_n(parts, s, own) == merge_n(parts, s, own)
    for (n, w), (_, before) in zip(parts, snapshot):
        assert all(np.array_equal(w.as_dict()[c], before[c]) for c in before)


# -- rounds ---------------------------------------------------------------------

QUICK = TrialSpec(seed=3, stdp=StdpConfig(20, 10, 0.1, epochs=1), baselines=False)


def test_union_regime_counts_are_constant_after_round_one():
    rec = run_trial(replace(QUICK, rounds=4, regime="fedunion"))
    assert rec.neuron_counts[0] == {0: 10, 1: 10, 2: 10}
    assert rec.neuron_counts[1] == {0: 20, 1: 10, 2: 10}
    assert all(c == rec.neuron_counts[1] for c in rec.neuron_counts[1:])
    assert len(rec.round_series("fedunion")) == 4


def test_avg_regime_counts_stay_at_npc():
    rec = run_trial(replace(QUICK, rounds=3, regime="fedavg"))
    assert all(c == {0: 10, 1: 10, 2: 10} for c in rec.neuron_counts)


def test_single_round_matches_first_round_of_many():
    one = run_trial(QUICK)
    many = run_trial(replace(QUICK, rounds=3))
    assert one.federated == many.federated and one.individual == many.individual
    assert record_equal(one, run_trial(QUICK))


def test_regime_must_be_avg_or_union():
    with pytest.raises(ConfigurationError):
        run_trial(replace(QUICK, rounds=2, regime="fedbest"))
