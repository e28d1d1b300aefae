import numpy as np
import pytest
from hypothesis import strategies as st

from sirsource.graph import Graph


def random_tree(n: int, rng: np.random.Generator) -> Graph:
    """Uniform-attachment random tree on ``n`` nodes."""
    if n == 1:
        return Graph.from_edges(1, [])
    parents = np.array([-1] + [int(rng.integers(i)) for i in range(1, n)])
    perm = rng.permutation(n)
    edges = [(perm[parents[i]], perm[i]) for i in range(1, n)]
    return Graph.from_edges(n, edges)


def random_connected_graph(n: int, extra: int, rng: np.random.Generator) -> Graph:
    tree = random_tree(n, rng)
    edges = [tuple(e) for e in tree.edges().tolist()]
    for _ in range(extra):
        u, v = rng.integers(n, size=2)
        if u != v:
            edges.append((int(u), int(v)))
    return Graph.from_edges(n, edges)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@st.composite
def trees(draw, max_nodes=30):
    n = draw(st.integers(1, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_tree(n, np.random.default_rng(seed))


@st.composite
def graphs_with_infected(draw, max_nodes=30, tree=True):
    n = draw(st.integers(1, max_nodes))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    g = random_tree(n, rng) if tree else random_connected_graph(n, draw(st.integers(0, n)), rng)
    infected = draw(st.sets(st.integers(0, n - 1), min_size=1))
    return g, sorted(infected)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
