from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from dcnn.graph import Graph

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_graph(rng, n, p=0.3, num_features=2, directed=False, weighted=False,
                 labels=None):
    """Erdos-Renyi style graph with Gaussian features (test helper)."""
    if directed:
        mask = rng.random((n, n)) < p
        np.fill_diagonal(mask, False)
        src, dst = np.nonzero(mask)
    else:
        iu = np.triu_indices(n, k=1)
        keep = rng.random(len(iu[0])) < p
        src, dst = iu[0][keep], iu[1][keep]
    edges = np.stack([src, dst], axis=1)
    weights = rng.uniform(0.5, 2.0, len(edges)) if weighted else None
    X = rng.normal(size=(n, num_features))
    return Graph.from_edges(n, edges, weights=weights, features=X,
                            node_labels=labels, directed=directed)


@st.composite
def graphs(draw, max_nodes=15, max_features=3, directed=None, weighted=None):
    n = draw(st.integers(1, max_nodes))
    f = draw(st.integers(1, max_features))
    p = draw(st.floats(0.0, 1.0))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    d = draw(st.booleans()) if directed is None else directed
    w = draw(st.booleans()) if weighted is None else weighted
    return random_graph(np.random.default_rng(seed), n, p, f, d, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)], features=[[1.0], [2.0], [3.0]])


def require_data(name):
    path = DATA / name
    if not path.is_dir():
        pytest.skip(f"dataset {name} not present (run scripts/prepare_datasets.py)")
    return path


# -- acceptance summary -----------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""
    def record(number, passed, text):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {text}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
