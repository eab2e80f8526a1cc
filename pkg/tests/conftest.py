import numpy as np
import pytest

from acsais.netcore import MultilayerNetwork, WeightedDigraph, is_m_connected

ACCEPTANCE_LINES: list[str] = []


def random_layer(n, p, rng, lo=0.5, hi=1.5):
    W = (rng.random((n, n)) < p) * rng.uniform(lo, hi, (n, n))
    np.fill_diagonal(W, 0.0)
    return W


def random_net(n, p, rng):
    return MultilayerNetwork.from_matrices(random_layer(n, p, rng), random_layer(n, p, rng))


def correlated_net(n, p, rng, keep=0.7):
    """Alert layer keeps each S contact with probability ``keep`` and adds fresh ones."""
    WS = random_layer(n, p, rng)
    A = ((WS > 0) & (rng.random((n, n)) < keep)) | (rng.random((n, n)) < p * (1 - keep))
    np.fill_diagonal(A, False)
    return MultilayerNetwork.from_matrices(WS, A * rng.uniform(0.5, 1.5, (n, n)))


def random_m_connected_net(n, p, rng, tries=1000):
    for _ in range(tries):
        net = correlated_net(n, p, rng)
        if is_m_connected(net)[0]:
            return net
    raise RuntimeError("could not draw an M-connected net")


def cycle_edges(nodes, w=1.0):
    return [(nodes[k], nodes[(k + 1) % len(nodes)], w) for k in range(len(nodes))]


def fig3_net():
    """12 nodes; the aggregation passes through four triples, then merges the first two."""
    s, a = [], []
    for base in (0, 3, 6, 9):
        tri = [base, base + 1, base + 2]
        s += cycle_edges(tri)
        a += cycle_edges(tri)
    s += [(0, 3, 1.0), (3, 1, 1.0), (5, 6, 1.0), (6, 0, 1.0), (7, 9, 1.0), (9, 1, 1.0)]
    a += [(0, 4, 1.0), (3, 2, 1.0), (5, 7, 1.0), (6, 5, 1.0), (7, 10, 1.0), (9, 4, 1.0)]
    return MultilayerNetwork(WeightedDigraph(12, tuple(s)), WeightedDigraph(12, tuple(a)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
