import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from topocf.graph import InteractionMatrix

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def bipartite_graphs(draw, max_users=12, max_items=12, min_edges=1, timestamps=False):
    """Random bipartite graph as an InteractionMatrix (isolates allowed)."""
    U = draw(st.integers(1, max_users))
    I = draw(st.integers(max(1, -(-min_edges // U)), max_items))
    cells = draw(st.lists(st.tuples(st.integers(0, U - 1), st.integers(0, I - 1)),
                          min_size=min_edges, max_size=U * I, unique=True))
    u = np.array([c[0] for c in cells], dtype=np.int64)
    i = np.array([c[1] for c in cells], dtype=np.int64)
    ts = np.arange(len(cells), dtype=np.int64)[::-1].copy() if timestamps else None
    return InteractionMatrix.from_edges(u, i, U, I, ts)


def random_graph(rng, U, I, p):
    dense = rng.random((U, I)) < p
    u, i = np.nonzero(dense)
    return InteractionMatrix.from_edges(u, i, U, I)


@pytest.fixture
def small_graph():
    # 4 users x 5 items, every node has an edge
    dense = np.array([[1, 1, 0, 0, 0],
                      [1, 0, 1, 0, 0],
                      [0, 1, 1, 1, 0],
                      [0, 0, 0, 1, 1]])
    return InteractionMatrix.from_dense(dense)


@pytest.fixture
def planted():
    from topocf.synthetic import planted_blocks
    return planted_blocks(rng=0)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
