import networkx as nx
import numpy as np
import pytest

from netfe.generators import random_connected
from netfe.graph import build_graph, matrices


def dense_lstar(g):
    """Independent oracle: D^{-1/2} pinv(S) D^{-1/2} via numpy's pinv."""
    gm = matrices(g)
    r = 1.0 / np.sqrt(gm.d)
    S = r[:, None] * gm.L.toarray() * r[None, :]
    return r[:, None] * np.linalg.pinv(S, rcond=1e-10, hermitian=True) * r[None, :]


def from_nx(G):
    return build_graph([(u + 1, v + 1) for u, v in G.edges()])


def random_graphs(count, n_max=40, seed=0, n_min=3):
    rng = np.random.default_rng(seed)
    for k in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        yield random_connected(n, float(rng.uniform(0.05, 0.6)), seed * 10_000 + k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def star8():
    return from_nx(nx.star_graph(7))


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store and print the outcome of an acceptance criterion."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
