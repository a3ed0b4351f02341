import numpy as np
import pytest

from fedstdp.core import BinaryDataset, ClassBlockedWeights, ClassOwnership, Int8FeatureDataset
from fedstdp.fednet.worker import start_worker_thread
from fedstdp.rng import SeededRng

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return SeededRng(1234)


def random_int8(rng: SeededRng, n: int, d: int, classes=3) -> Int8FeatureDataset:
    feats = np.array([rng.below(256) - 128 for _ in range(n * d)]).reshape(n, d)
    labels = np.array([i % classes for i in range(n)])
    return Int8FeatureDataset(feats, labels, tuple(range(classes)))


def random_bits(rng: SeededRng, n: int, d: int, classes=3, p=0.5) -> BinaryDataset:
    bits = (rng.uniform(0, 1, n * d) < p).astype(np.uint8).reshape(n, d)
    labels = np.array([i % classes for i in range(n)])
    return BinaryDataset(bits, labels, tuple(range(classes)))


def two_node_weights(rng: SeededRng, npc=3, dim=8, lo=0, hi=2):
    """Node 0 owns {0, 1}, node 1 owns {1, 2}; class 1 is shared."""
    def block():
        return rng.uniform(lo, hi, npc * dim).astype(np.int64).reshape(npc, dim)
    w0 = ClassBlockedWeights({0: block(), 1: block()}, dim)
    w1 = ClassBlockedWeights({1: block(), 2: block()}, dim)
    own = ClassOwnership({0: {0}, 1: {0, 1}, 2: {1}})
    return [(0, w0), (1, w1)], own


@pytest.fixture
def workers():
    """Two loopback workers; shut down after the test."""
    from fedstdp.fednet.orchestrator import RemoteHandle
    started = [start_worker_thread() for _ in range(2)]
    addrs = [f"{a[0]}:{a[1]}" for _, a, _ in started]
    yield addrs
    for addr in addrs:
        h = RemoteHandle(addr, timeout=5)
        try:
            h.shutdown()
        except OSError:
            pass
